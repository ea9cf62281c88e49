#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "flowtrack/errors.hpp"
#include "flowtrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace flowtrack;

namespace {

constexpr double kDegToRad = M_PI / 180.0;

// Exit codes: 0 success, 1 unexpected, 2 configuration, 3 data, 4 numerical.
enum ExitCode { kOk = 0, kUnexpected = 1, kConfigExit = 2, kDataExit = 3, kNumericalExit = 4 };

struct GenerateOptions {
  std::string out;
  int frames = 150;
  double fps = 30.0;
  std::uint64_t seed = 1;
  std::string object = "box";
  std::string preset = "orbit";
  std::string traj_json;
  double speed = 0.3;
  double omega_deg = 90.0;
  double depth = 1.0;
  int width = 640, height = 480;
  double fx = 600.0, fy = 600.0;
  double cx = -1.0, cy = -1.0;
  int mask_delay = 6, pose_delay = 6;
  double pose_noise_t = 0.0, pose_noise_rot_deg = 0.0;
  double outlier_rate = 0.0, outlier_t = 0.2, outlier_rot_deg = 45.0;
  double flow_noise = 0.0, depth_noise = 0.0, mask_miss_rate = 0.0;
  bool zero_occluded_flow = false;
  double background_depth = -1.0;  // < 0: 1.8x object depth; 0 disables
};

TrajectorySpec trajectory_from_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("trajectory parse error: " + std::string(e.what()));
  }
  TrajectorySpec spec;
  const auto vec3 = [](const nlohmann::json& a) {
    return Vec3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
  };
  try {
    const auto& init = j.at("initial_pose");
    spec.initial_pose.t = vec3(init.at("t"));
    const auto& q = init.at("q");
    spec.initial_pose.q = UnitQuaternion(q.at(0).get<double>(), q.at(1).get<double>(),
                                         q.at(2).get<double>(), q.at(3).get<double>());
    for (const auto& seg : j.at("segments")) {
      TrajectorySegment s;
      s.duration = seg.at("duration").get<double>();
      s.twist.v_o = vec3(seg.at("v_o"));
      s.twist.omega = vec3(seg.at("omega"));
      spec.segments.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("trajectory field error: " + std::string(e.what()));
  }
  return spec;
}

int run_generate(const GenerateOptions& opt) {
  CameraIntrinsics intr;
  intr.fx = opt.fx;
  intr.fy = opt.fy;
  intr.width = opt.width;
  intr.height = opt.height;
  intr.cx = opt.cx >= 0.0 ? opt.cx : opt.width / 2.0;
  intr.cy = opt.cy >= 0.0 ? opt.cy : opt.height / 2.0;
  intr.validate();

  TriangleMesh mesh;
  if (opt.object == "box") {
    mesh = TriangleMesh::box(0.10, 0.16, 0.21);
  } else if (opt.object == "cylinder") {
    mesh = TriangleMesh::cylinder(0.035, 0.12);
  } else {
    throw ConfigError("unknown object '" + opt.object + "' (box|cylinder)");
  }

  TrajectorySpec traj;
  const double omega = opt.omega_deg * kDegToRad;
  if (!opt.traj_json.empty()) {
    traj = trajectory_from_json(opt.traj_json);
  } else if (opt.preset == "orbit") {
    traj = orbit_trajectory(opt.speed, omega, Vec3(0, 0, 1), opt.depth);
  } else if (opt.preset == "tumble") {
    traj = orbit_trajectory(opt.speed, omega, Vec3(0.25, 0.25, 0.935), opt.depth);
  } else if (opt.preset == "drift") {
    traj = drift_trajectory(Vec3(opt.speed, 0, 0), Vec3(-0.2, 0, opt.depth));
  } else if (opt.preset == "spin") {
    traj = spin_trajectory(Vec3(0, 0, omega), Vec3(0, 0, opt.depth));
  } else if (opt.preset == "static") {
    traj = static_trajectory(Vec3(0, 0, opt.depth));
  } else {
    throw ConfigError("unknown preset '" + opt.preset + "'");
  }

  CorruptionSpec corruption;
  corruption.mask_delay = opt.mask_delay;
  corruption.pose_delay = opt.pose_delay;
  corruption.pose_noise_t = opt.pose_noise_t;
  corruption.pose_noise_rot = opt.pose_noise_rot_deg * kDegToRad;
  corruption.outlier_rate = opt.outlier_rate;
  corruption.outlier_t = opt.outlier_t;
  corruption.outlier_rot = opt.outlier_rot_deg * kDegToRad;
  corruption.flow_noise = opt.flow_noise;
  corruption.depth_noise = opt.depth_noise;
  corruption.mask_miss_rate = opt.mask_miss_rate;
  corruption.zero_occluded_flow = opt.zero_occluded_flow;

  TriangleMesh environment;
  const double bg = opt.background_depth < 0.0 ? 1.8 * opt.depth : opt.background_depth;
  if (bg > 0.0) environment = backplane(bg);

  SceneSimulator sim(traj, corruption, mesh, intr, opt.fps, opt.frames, opt.seed,
                     std::move(environment));
  const int written = write_sequence(opt.out, sim);
  std::cout << "wrote " << written << " frames to " << opt.out << "\n";
  if (written < opt.frames) {
    std::cout << "note: sequence truncated (object left the frustum)\n";
  }
  return kOk;
}

void write_report_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "frames,add_auc_percent,rmse_e_t_cm,rmse_e_a_deg,rmse_e_v_cm_s,rmse_e_w_deg_s\n";
  out.precision(9);
  out << report.frames << "," << report.add_auc_percent << "," << report.rmse.e_t_cm << ","
      << report.rmse.e_a_deg << ",";
  if (report.rmse.has_velocity) {
    out << report.rmse.e_v_cm_s << "," << report.rmse.e_omega_deg_s << "\n";
  } else {
    out << ",\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowtrack: optical-flow-aided 6D object pose and velocity tracking"};
  app.require_subcommand(1);

  GenerateOptions gen;
  CLI::App* generate = app.add_subcommand("generate", "synthesize a sequence with ground truth");
  generate->add_option("--out", gen.out, "output sequence directory")->required();
  generate->add_option("--frames", gen.frames, "number of frames");
  generate->add_option("--fps", gen.fps, "frame rate");
  generate->add_option("--seed", gen.seed, "random seed");
  generate->add_option("--object", gen.object, "box|cylinder");
  generate->add_option("--preset", gen.preset, "orbit|tumble|drift|spin|static");
  generate->add_option("--traj-json", gen.traj_json, "trajectory spec file (overrides preset)");
  generate->add_option("--speed", gen.speed, "twist linear speed |v_o| [m/s]");
  generate->add_option("--omega-deg", gen.omega_deg, "twist angular speed [deg/s]");
  generate->add_option("--depth", gen.depth, "nominal object distance [m]");
  generate->add_option("--width", gen.width, "image width");
  generate->add_option("--height", gen.height, "image height");
  generate->add_option("--fx", gen.fx, "focal length x [px]");
  generate->add_option("--fy", gen.fy, "focal length y [px]");
  generate->add_option("--cx", gen.cx, "principal point x (default: center)");
  generate->add_option("--cy", gen.cy, "principal point y (default: center)");
  generate->add_option("--mask-delay", gen.mask_delay, "segmentation delay N_s [frames]");
  generate->add_option("--pose-delay", gen.pose_delay, "pose delay N_p [frames]");
  generate->add_option("--pose-noise-t", gen.pose_noise_t, "pose position noise std [m]");
  generate->add_option("--pose-noise-rot-deg", gen.pose_noise_rot_deg, "pose rotation noise std [deg]");
  generate->add_option("--outlier-rate", gen.outlier_rate, "pose outlier probability");
  generate->add_option("--outlier-t", gen.outlier_t, "outlier offset [m]");
  generate->add_option("--outlier-rot-deg", gen.outlier_rot_deg, "outlier rotation [deg]");
  generate->add_option("--flow-noise", gen.flow_noise, "flow noise std [px]");
  generate->add_option("--depth-noise", gen.depth_noise, "depth noise std [m]");
  generate->add_option("--mask-miss-rate", gen.mask_miss_rate, "detection miss probability");
  generate->add_flag("--zero-occluded-flow", gen.zero_occluded_flow,
                     "zero flow on self-occluded pixels");
  generate->add_option("--background-depth", gen.background_depth,
                       "static backplane depth [m]; 0 disables, default 1.8x object depth");

  std::string trk_seq, trk_out, trk_config;
  bool no_velocity = false, no_pose = false, no_mask_sync = false, no_pose_sync = false;
  bool no_outlier_rejection = false;
  bool overlay_on = false, overlay_off = false;
  CLI::App* track = app.add_subcommand("track", "run the tracking pipeline on a sequence");
  track->add_option("--seq", trk_seq, "sequence directory")->required();
  track->add_option("--out", trk_out, "output directory")->required();
  track->add_option("--config", trk_config, "JSON config file (defaults otherwise)");
  track->add_flag("--no-velocity", no_velocity, "disable the flow-based velocity stage");
  track->add_flag("--no-pose", no_pose, "disable pose measurements (seed only)");
  track->add_flag("--no-mask-sync", no_mask_sync, "use raw delayed masks");
  track->add_flag("--no-pose-sync", no_pose_sync, "apply delayed poses at arrival");
  track->add_flag("--no-outlier-rejection", no_outlier_rejection, "accept every pose");
  track->add_flag("--overlay", overlay_on, "write silhouette overlays");
  track->add_flag("--no-overlay", overlay_off, "suppress overlays even without ground truth");

  std::string ev_seq, ev_est, ev_out;
  bool baseline_zoh = false;
  double add_threshold = 0.1;
  CLI::App* evaluate = app.add_subcommand("evaluate", "compute metrics against ground truth");
  evaluate->add_option("--seq", ev_seq, "sequence directory (ground truth + mesh)")->required();
  evaluate->add_option("--est", ev_est, "tracker output directory (estimates.csv)");
  evaluate->add_option("--out", ev_out, "report CSV path");
  evaluate->add_flag("--baseline-zoh", baseline_zoh,
                     "evaluate the zero-order-held raw pose stream instead");
  evaluate->add_option("--add-threshold", add_threshold, "ADD-AUC threshold [m]");

  std::string ab_seq, ab_out, ab_config;
  CLI::App* ablate = app.add_subcommand("ablate", "run the ablation matrix on a sequence");
  ablate->add_option("--seq", ab_seq, "sequence directory")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--config", ab_config, "JSON config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigExit;
  }

  try {
    if (*generate) {
      return run_generate(gen);
    }
    if (*track) {
      RunConfig cfg = trk_config.empty() ? RunConfig{} : RunConfig::from_json_file(trk_config);
      cfg.ablation.use_velocity = cfg.ablation.use_velocity && !no_velocity;
      cfg.ablation.use_pose = cfg.ablation.use_pose && !no_pose;
      cfg.ablation.use_mask_sync = cfg.ablation.use_mask_sync && !no_mask_sync;
      cfg.ablation.use_pose_sync = cfg.ablation.use_pose_sync && !no_pose_sync;
      cfg.ablation.use_outlier_rejection =
          cfg.ablation.use_outlier_rejection && !no_outlier_rejection;
      std::optional<bool> overlay;
      if (overlay_on) overlay = true;
      if (overlay_off) overlay = false;
      const TrackResult result = run_tracker_on_dir(trk_seq, cfg, trk_out, overlay);
      std::cout << result.timings.summary();
      std::cout << "poses: " << result.poses_accepted << " accepted, "
                << result.poses_rejected << " rejected, " << result.poses_dropped
                << " dropped\n";
      SequenceReader reader(trk_seq);
      if (reader.has_ground_truth() && reader.has_mesh()) {
        const EvalReport report =
            evaluate_estimates(reader, result.estimates, result.velocities);
        std::cout << report.table();
      }
      return kOk;
    }
    if (*evaluate) {
      SequenceReader reader(ev_seq);
      EvalReport report;
      if (baseline_zoh) {
        report = evaluate_baseline_zoh(reader, add_threshold);
      } else {
        if (ev_est.empty()) {
          throw ConfigError("evaluate: --est is required unless --baseline-zoh is set");
        }
        const auto estimates = read_estimates(fs::path(ev_est) / "estimates.csv");
        std::vector<TwistRow> velocities;
        if (fs::exists(fs::path(ev_est) / "velocities.csv")) {
          velocities = read_velocities(fs::path(ev_est) / "velocities.csv");
        }
        report = evaluate_estimates(reader, estimates, velocities, add_threshold);
      }
      std::cout << report.table();
      if (!ev_out.empty()) write_report_csv(ev_out, report);
      return kOk;
    }
    if (*ablate) {
      RunConfig cfg = ab_config.empty() ? RunConfig{} : RunConfig::from_json_file(ab_config);
      const auto results = run_ablations(ab_seq, cfg, ab_out);
      const std::string table = ablation_table(results);
      std::cout << table;
      std::ofstream csv(fs::path(ab_out) / "ablation_report.csv");
      csv << "variant,frames,add_auc_percent,rmse_e_t_cm,rmse_e_a_deg,rmse_e_v_cm_s,rmse_e_w_deg_s\n";
      csv.precision(9);
      for (const auto& r : results) {
        csv << r.variant << "," << r.report.frames << "," << r.report.add_auc_percent << ","
            << r.report.rmse.e_t_cm << "," << r.report.rmse.e_a_deg << ",";
        if (r.report.rmse.has_velocity) {
          csv << r.report.rmse.e_v_cm_s << "," << r.report.rmse.e_omega_deg_s;
        } else {
          csv << ",";
        }
        csv << "\n";
      }
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}
