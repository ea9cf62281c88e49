#include "flowtrack/tracker.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "flowtrack/errors.hpp"
#include "flowtrack/flow_sync.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace flowtrack {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& name) {
  Eigen::MatrixXd m(rows, cols);
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw ConfigError("config: " + name + " must be a " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " matrix");
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError("config: " + name + " row " + std::to_string(r) + " malformed");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void RunConfig::validate() const {
  if (!ablation.use_velocity && !ablation.use_pose) {
    throw ConfigError("config: at least one of velocity/pose measurements must be enabled");
  }
  if (!(twist_prior_var > 0.0)) {
    throw ConfigError("config: twist prior variance must be positive");
  }
  if (mask_delay < 0) {
    throw ConfigError("config: mask delay must be non-negative");
  }
  twist.validate();
  pose.validate();
}

RunConfig RunConfig::from_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }

  RunConfig cfg;
  try {
    if (j.contains("twist")) {
      const auto& t = j["twist"];
      if (t.contains("q_v")) cfg.twist.q_v = matrix_from_json(t["q_v"], 3, 3, "twist.q_v");
      if (t.contains("q_omega"))
        cfg.twist.q_omega = matrix_from_json(t["q_omega"], 3, 3, "twist.q_omega");
      if (t.contains("sigma_flow")) cfg.twist.sigma_flow = t["sigma_flow"].get<double>();
      if (t.contains("max_pixels")) cfg.twist.max_pixels = t["max_pixels"].get<int>();
    }
    if (j.contains("pose")) {
      const auto& p = j["pose"];
      if (p.contains("q_t")) cfg.pose.q_t = matrix_from_json(p["q_t"], 6, 6, "pose.q_t");
      if (p.contains("q_q")) cfg.pose.q_q = matrix_from_json(p["q_q"], 3, 3, "pose.q_q");
      if (p.contains("r_t")) cfg.pose.r_t = matrix_from_json(p["r_t"], 3, 3, "pose.r_t");
      if (p.contains("r_q")) cfg.pose.r_q = matrix_from_json(p["r_q"], 3, 3, "pose.r_q");
      if (p.contains("r_v")) cfg.pose.r_v = matrix_from_json(p["r_v"], 3, 3, "pose.r_v");
      if (p.contains("r_omega"))
        cfg.pose.r_omega = matrix_from_json(p["r_omega"], 3, 3, "pose.r_omega");
      if (p.contains("gamma")) cfg.pose.gamma = p["gamma"].get<double>();
      if (p.contains("pose_delay")) cfg.pose.pose_delay = p["pose_delay"].get<int>();
      if (p.contains("ukf_alpha")) cfg.pose.ukf_alpha = p["ukf_alpha"].get<double>();
      if (p.contains("ukf_beta")) cfg.pose.ukf_beta = p["ukf_beta"].get<double>();
      if (p.contains("ukf_kappa")) cfg.pose.ukf_kappa = p["ukf_kappa"].get<double>();
      if (p.contains("min_depth_overlap"))
        cfg.pose.min_depth_overlap = p["min_depth_overlap"].get<int>();
      if (p.contains("init_var_t")) cfg.pose.init_var_t = p["init_var_t"].get<double>();
      if (p.contains("init_var_v")) cfg.pose.init_var_v = p["init_var_v"].get<double>();
      if (p.contains("init_var_rot")) cfg.pose.init_var_rot = p["init_var_rot"].get<double>();
      if (p.contains("init_var_omega"))
        cfg.pose.init_var_omega = p["init_var_omega"].get<double>();
    }
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      if (a.contains("use_velocity")) cfg.ablation.use_velocity = a["use_velocity"].get<bool>();
      if (a.contains("use_pose")) cfg.ablation.use_pose = a["use_pose"].get<bool>();
      if (a.contains("use_mask_sync"))
        cfg.ablation.use_mask_sync = a["use_mask_sync"].get<bool>();
      if (a.contains("use_pose_sync"))
        cfg.ablation.use_pose_sync = a["use_pose_sync"].get<bool>();
      if (a.contains("use_outlier_rejection"))
        cfg.ablation.use_outlier_rejection = a["use_outlier_rejection"].get<bool>();
    }
    if (j.contains("twist_prior_var")) cfg.twist_prior_var = j["twist_prior_var"].get<double>();
    if (j.contains("mask_delay")) cfg.mask_delay = j["mask_delay"].get<int>();
  } catch (const json::exception& e) {
    throw ConfigError("config field error in " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void RunConfig::save_json(const fs::path& path) const {
  json j;
  j["twist"] = {{"q_v", matrix_to_json(twist.q_v)},
                {"q_omega", matrix_to_json(twist.q_omega)},
                {"sigma_flow", twist.sigma_flow},
                {"max_pixels", twist.max_pixels}};
  j["pose"] = {{"q_t", matrix_to_json(pose.q_t)},
               {"q_q", matrix_to_json(pose.q_q)},
               {"r_t", matrix_to_json(pose.r_t)},
               {"r_q", matrix_to_json(pose.r_q)},
               {"r_v", matrix_to_json(pose.r_v)},
               {"r_omega", matrix_to_json(pose.r_omega)},
               {"gamma", pose.gamma},
               {"pose_delay", pose.pose_delay},
               {"ukf_alpha", pose.ukf_alpha},
               {"ukf_beta", pose.ukf_beta},
               {"ukf_kappa", pose.ukf_kappa},
               {"min_depth_overlap", pose.min_depth_overlap},
               {"init_var_t", pose.init_var_t},
               {"init_var_v", pose.init_var_v},
               {"init_var_rot", pose.init_var_rot},
               {"init_var_omega", pose.init_var_omega}};
  j["ablation"] = {{"use_velocity", ablation.use_velocity},
                   {"use_pose", ablation.use_pose},
                   {"use_mask_sync", ablation.use_mask_sync},
                   {"use_pose_sync", ablation.use_pose_sync},
                   {"use_outlier_rejection", ablation.use_outlier_rejection}};
  j["twist_prior_var"] = twist_prior_var;
  j["mask_delay"] = mask_delay;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::optional<TrackerInput> BundleSource::next() {
  if (at_ >= bundle_.frames.size()) return std::nullopt;
  const SimFrame& f = bundle_.frames[at_++];
  TrackerInput in;
  in.frame = f.frame;
  in.depth = std::make_shared<DepthMap>(f.depth);
  in.flow = f.flow;
  in.mask_events = f.mask_events;
  in.pose_events = f.pose_events;
  return in;
}

std::optional<TrackerInput> SimulatorSource::next() {
  auto f = sim_.next();
  if (!f.has_value()) return std::nullopt;
  TrackerInput in;
  in.frame = f->frame;
  in.depth = std::make_shared<DepthMap>(std::move(f->depth));
  in.flow = std::move(f->flow);
  in.mask_events = std::move(f->mask_events);
  in.pose_events = std::move(f->pose_events);
  return in;
}

std::optional<TrackerInput> ReaderSource::next() {
  if (at_ >= reader_.frame_count()) return std::nullopt;
  TrackerInput in;
  in.frame = at_;
  in.depth = std::make_shared<DepthMap>(reader_.read_depth(at_));
  if (at_ > 0) in.flow = reader_.read_flow(at_);
  const auto& masks = reader_.mask_index();
  while (mask_at_ < masks.size() && masks[mask_at_].available == at_) {
    in.mask_events.push_back(
        MaskEvent{masks[mask_at_].available, masks[mask_at_].origin,
                  reader_.read_mask(masks[mask_at_])});
    ++mask_at_;
  }
  const auto& poses = reader_.pose_events();
  while (pose_at_ < poses.size() && poses[pose_at_].available == at_) {
    in.pose_events.push_back(poses[pose_at_]);
    ++pose_at_;
  }
  ++at_;
  return in;
}

std::string StageTimings::summary() const {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  const double n = frames > 0 ? frames : 1;
  os << "frames                " << frames << "\n"
     << "mask sync   [ms/frm]  " << mask_sync_ms / n << "\n"
     << "velocity KF [ms/frm]  " << velocity_ms / n << "\n"
     << "pose UKF    [ms/frm]  " << (pose_ms - render_ms) / n << "\n"
     << "renders     [ms/frm]  " << render_ms / n << "\n"
     << "total       [ms/frm]  " << per_frame_ms() << "\n";
  if (per_frame_ms() > 0.0) {
    os << "throughput  [fps]     " << 1000.0 / per_frame_ms() << "\n";
  }
  return os.str();
}

TrackResult run_tracker(FrameSource& source, const RunConfig& cfg_in,
                        std::shared_ptr<const TriangleMesh> mesh,
                        const std::function<void(const EstimateRow&)>& on_estimate) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  const CameraIntrinsics& intr = source.intrinsics();
  intr.validate();
  const double dt = 1.0 / source.fps();
  cfg.twist.dt = dt;
  cfg.pose.dt = dt;
  cfg.pose.use_outlier_rejection = cfg.ablation.use_outlier_rejection;
  cfg.pose.use_velocity_updates = cfg.ablation.use_velocity;
  if (cfg.ablation.use_outlier_rejection && !mesh) {
    throw ConfigError("tracker: outlier rejection requires an object mesh");
  }

  const std::size_t capacity =
      static_cast<std::size_t>(std::max(cfg.mask_delay, cfg.pose.pose_delay)) + 2;

  TrackResult result;
  TwistBelief twist_belief;
  twist_belief.covariance = cfg.twist_prior_var * Mat6::Identity();
  PoseUkf pose_filter(cfg.pose, capacity, mesh, intr);

  std::optional<MaskSynchronizer> sync;
  Mask raw_mask;        // zero-order-held raw delayed mask (mask sync disabled)
  bool have_raw = false;
  Mask prev_mask;       // mask state as of the previous frame
  bool have_prev_mask = false;
  std::shared_ptr<const DepthMap> prev_depth;
  std::optional<std::int64_t> first_frame;
  std::int64_t seed_frame = -1;

  while (auto input = source.next()) {
    const std::int64_t k = input->frame;
    if (!first_frame.has_value()) {
      first_frame = k;
      if (cfg.ablation.use_mask_sync) {
        sync.emplace(cfg.mask_delay, k, capacity);
      }
    }

    // Twist filter over the previous frame's mask and depth (the flow F_k
    // describes the motion of frame k-1 pixels).
    Twist velocity_meas;
    bool velocity_valid = false;
    {
      const auto t0 = Clock::now();
      if (cfg.ablation.use_velocity) {
        if (k > *first_frame && have_prev_mask && prev_depth && !input->flow.empty()) {
          const auto step = velocity_kf::step(twist_belief, input->flow, prev_mask,
                                              *prev_depth, intr, cfg.twist);
          twist_belief = step.belief;
          velocity_meas = step.measured;
        } else {
          twist_belief = velocity_kf::predict(twist_belief, cfg.twist);
          velocity_meas = twist_belief.mean;
        }
        velocity_valid = true;
        result.velocities.push_back(TwistRow{k, velocity_meas});
      }
      result.timings.velocity_ms += ms_since(t0);
    }

    // Mask synchronization; the result feeds the next frame's twist filter.
    {
      const auto t0 = Clock::now();
      if (cfg.ablation.use_mask_sync) {
        if (k > *first_frame) sync->advance(input->flow, k);
        for (const auto& ev : input->mask_events) {
          sync->catch_up(ev.mask, ev.origin);
        }
        if (sync->initialized()) {
          prev_mask = sync->current_mask();
          have_prev_mask = true;
        }
      } else {
        for (const auto& ev : input->mask_events) {
          raw_mask = ev.mask;
          have_raw = true;
        }
        if (have_raw) {
          prev_mask = raw_mask;
          have_prev_mask = true;
        }
      }
      result.timings.mask_sync_ms += ms_since(t0);
    }

    // Pose filter: delayed poses first, then the per-frame velocity step.
    int pose_flag = -1;
    {
      const auto t0 = Clock::now();
      std::vector<PoseEvent> deferred;
      for (const auto& ev : input->pose_events) {
        if (!pose_filter.initialized()) {
          pose_filter.initialize(ev.pose, k, velocity_meas, input->depth);
          seed_frame = k;
          pose_flag = 1;
          continue;
        }
        if (!cfg.ablation.use_pose) continue;
        const std::int64_t origin = cfg.ablation.use_pose_sync ? ev.origin : k;
        if (origin >= k) {
          deferred.push_back(ev);  // applied after this frame's step
          continue;
        }
        const PoseOutcome outcome = pose_filter.on_pose_measurement(ev.pose, origin);
        switch (outcome) {
          case PoseOutcome::kAccepted: result.poses_accepted++; pose_flag = 1; break;
          case PoseOutcome::kRejectedOutlier: result.poses_rejected++; pose_flag = 0; break;
          case PoseOutcome::kDropped: result.poses_dropped++; break;
        }
      }
      if (pose_filter.initialized() && k > seed_frame) {
        pose_filter.step(velocity_meas, k, input->depth);
      }
      for (const auto& ev : deferred) {
        const PoseOutcome outcome = pose_filter.on_pose_measurement(ev.pose, k);
        switch (outcome) {
          case PoseOutcome::kAccepted: result.poses_accepted++; pose_flag = 1; break;
          case PoseOutcome::kRejectedOutlier: result.poses_rejected++; pose_flag = 0; break;
          case PoseOutcome::kDropped: result.poses_dropped++; break;
        }
      }
      result.timings.pose_ms += ms_since(t0);
    }

    if (pose_filter.initialized()) {
      const PoseState& s = pose_filter.belief().mean;
      EstimateRow row;
      row.frame = k;
      row.t = s.t;
      row.q = s.q;
      row.v = s.v;
      row.omega = s.omega;
      row.pose_accepted = pose_flag;
      result.estimates.push_back(row);
      if (on_estimate) on_estimate(row);
    }

    (void)velocity_valid;
    prev_depth = input->depth;
    result.timings.frames++;
  }

  if (result.estimates.empty()) {
    throw DataError("tracker: no pose measurement ever arrived; cannot initialize");
  }
  result.timings.render_ms = pose_filter.render_seconds() * 1000.0;
  return result;
}

TrackResult run_tracker_on_dir(const fs::path& sequence_dir, const RunConfig& cfg,
                               const fs::path& out_dir, std::optional<bool> overlay) {
  SequenceReader reader(sequence_dir);
  std::shared_ptr<const TriangleMesh> mesh;
  if (reader.has_mesh()) {
    mesh = std::make_shared<TriangleMesh>(reader.load_mesh());
  }
  const bool want_overlay = overlay.value_or(!reader.has_ground_truth());
  if (want_overlay && !mesh) {
    throw ConfigError("tracker: overlay rendering requires mesh.obj in the sequence");
  }

  fs::create_directories(out_dir);
  if (want_overlay) fs::create_directories(out_dir / "overlay");

  std::function<void(const EstimateRow&)> on_estimate;
  if (want_overlay) {
    const CameraIntrinsics intr = reader.intrinsics();
    const auto mesh_ptr = mesh;
    const fs::path overlay_dir = out_dir / "overlay";
    on_estimate = [intr, mesh_ptr, overlay_dir](const EstimateRow& row) {
      const DepthMap d = render_depth(*mesh_ptr, Pose{row.t, row.q}, intr);
      Mask silhouette(d.width, d.height);
      for (int v = 0; v < d.height; ++v) {
        for (int u = 0; u < d.width; ++u) {
          if (d.valid_at(u, v)) silhouette.insert(u, v);
        }
      }
      char name[32];
      std::snprintf(name, sizeof(name), "%06lld.pgm", static_cast<long long>(row.frame));
      write_pgm8(overlay_dir / name, silhouette);
    };
  }

  ReaderSource source(reader);
  TrackResult result = run_tracker(source, cfg, mesh, on_estimate);
  write_estimates(out_dir / "estimates.csv", result.estimates);
  if (!result.velocities.empty()) {
    write_velocities(out_dir / "velocities.csv", result.velocities);
  }
  return result;
}

EvalReport evaluate_estimates(const SequenceReader& reader,
                              const std::vector<EstimateRow>& estimates,
                              const std::vector<TwistRow>& velocities,
                              double add_threshold) {
  if (!reader.has_ground_truth()) {
    throw DataError("evaluate: sequence has no ground_truth.csv");
  }
  if (!reader.has_mesh()) {
    throw DataError("evaluate: sequence has no mesh.obj (needed for ADD model points)");
  }
  const auto& gt = reader.ground_truth();
  const auto gt_row = [&](std::int64_t frame) -> const GroundTruthRow& {
    if (frame < 0 || frame >= static_cast<std::int64_t>(gt.size()) ||
        gt[static_cast<std::size_t>(frame)].frame != frame) {
      throw DataError("evaluate: estimate frame " + std::to_string(frame) +
                      " not covered by ground truth");
    }
    return gt[static_cast<std::size_t>(frame)];
  };

  std::vector<Pose> est_poses, gt_poses;
  for (const auto& row : estimates) {
    est_poses.push_back(Pose{row.t, row.q});
    gt_poses.push_back(gt_row(row.frame).pose);
  }
  std::vector<Twist> est_twists, gt_twists;
  for (const auto& row : velocities) {
    est_twists.push_back(row.twist);
    gt_twists.push_back(gt_row(row.frame).twist);
  }
  const TriangleMesh mesh = reader.load_mesh();
  return evaluate_traces(est_poses, gt_poses, mesh.vertices, est_twists, gt_twists,
                         add_threshold);
}

EvalReport evaluate_baseline_zoh(const SequenceReader& reader, double add_threshold) {
  if (!reader.has_ground_truth()) {
    throw DataError("evaluate: sequence has no ground_truth.csv");
  }
  std::vector<TimedPose> events;
  for (const auto& ev : reader.pose_events()) {
    events.push_back(TimedPose{ev.available, ev.pose});
  }
  if (events.empty()) {
    throw DataError("evaluate: sequence has no pose measurements for the baseline");
  }
  const auto held = zero_order_hold(events, reader.frame_count());
  std::vector<Pose> est_poses, gt_poses;
  const auto& gt = reader.ground_truth();
  for (std::int64_t k = 0; k < reader.frame_count(); ++k) {
    if (!held[static_cast<std::size_t>(k)].has_value()) continue;
    est_poses.push_back(*held[static_cast<std::size_t>(k)]);
    gt_poses.push_back(gt[static_cast<std::size_t>(k)].pose);
  }
  const TriangleMesh mesh = reader.load_mesh();
  return evaluate_traces(est_poses, gt_poses, mesh.vertices, {}, {}, add_threshold);
}

std::vector<AblationResult> run_ablations(const fs::path& sequence_dir,
                                          const RunConfig& base_cfg,
                                          const fs::path& out_dir) {
  struct Variant {
    const char* name;
    std::function<void(RunConfig&)> mutate;
  };
  const std::vector<Variant> variants = {
      {"full", [](RunConfig&) {}},
      {"no_pose_sync", [](RunConfig& c) { c.ablation.use_pose_sync = false; }},
      {"no_outlier_rejection", [](RunConfig& c) { c.ablation.use_outlier_rejection = false; }},
      {"no_mask_sync", [](RunConfig& c) { c.ablation.use_mask_sync = false; }},
      {"no_velocity", [](RunConfig& c) { c.ablation.use_velocity = false; }},
      {"no_pose", [](RunConfig& c) { c.ablation.use_pose = false; }},
  };

  SequenceReader reader(sequence_dir);
  std::vector<AblationResult> results;
  for (const auto& variant : variants) {
    RunConfig cfg = base_cfg;
    variant.mutate(cfg);
    const fs::path variant_dir = out_dir / variant.name;
    TrackResult run = run_tracker_on_dir(sequence_dir, cfg, variant_dir, false);
    AblationResult res;
    res.variant = variant.name;
    res.report = evaluate_estimates(reader, run.estimates, run.velocities);
    results.push_back(std::move(res));
  }
  return results;
}

std::string ablation_table(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << "variant                 ADD-AUC[%]   e_t[cm]   e_a[deg]   e_v[cm/s]  e_w[deg/s]\n";
  os.precision(3);
  os << std::fixed;
  for (const auto& r : results) {
    os.width(24);
    os << std::left << r.variant << std::right;
    os.width(10);
    os << r.report.add_auc_percent;
    os.width(10);
    os << r.report.rmse.e_t_cm;
    os.width(11);
    os << r.report.rmse.e_a_deg;
    if (r.report.rmse.has_velocity) {
      os.width(12);
      os << r.report.rmse.e_v_cm_s;
      os.width(12);
      os << r.report.rmse.e_omega_deg_s;
    } else {
      os << "           -           -";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace flowtrack
