#include "flowtrack/pose_ukf.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <iostream>
#include <vector>

#include "flowtrack/errors.hpp"

namespace flowtrack {

namespace {

constexpr int kErrorDim = 12;
constexpr int kNumSigma = 2 * kErrorDim + 1;

struct SigmaWeights {
  double gamma;                 // sigma point spread sqrt(n + lambda)
  std::array<double, kNumSigma> wm;
  std::array<double, kNumSigma> wc;
};

SigmaWeights make_weights(const PoseFilterConfig& cfg) {
  const double n = kErrorDim;
  const double lambda = cfg.ukf_alpha * cfg.ukf_alpha * (n + cfg.ukf_kappa) - n;
  SigmaWeights w;
  w.gamma = std::sqrt(n + lambda);
  w.wm[0] = lambda / (n + lambda);
  w.wc[0] = w.wm[0] + (1.0 - cfg.ukf_alpha * cfg.ukf_alpha + cfg.ukf_beta);
  for (int i = 1; i < kNumSigma; ++i) {
    w.wm[i] = 1.0 / (2.0 * (n + lambda));
    w.wc[i] = w.wm[i];
  }
  return w;
}

PoseState retract(const PoseState& mean, const Vec12& delta) {
  PoseState out;
  out.t = mean.t + delta.segment<3>(0);
  out.v = mean.v + delta.segment<3>(3);
  out.q = UnitQuaternion::from_rotation_vector(delta.segment<3>(6)) * mean.q;
  out.omega = mean.omega + delta.segment<3>(9);
  return out;
}

Vec12 local_coords(const PoseState& s, const PoseState& ref) {
  Vec12 d;
  d.segment<3>(0) = s.t - ref.t;
  d.segment<3>(3) = s.v - ref.v;
  d.segment<3>(6) = (s.q * ref.q.conjugate()).to_rotation_vector();
  d.segment<3>(9) = s.omega - ref.omega;
  return d;
}

/// Sigma points as error-space deltas: column 0 is zero, then +/- gamma * L_i.
std::array<Vec12, kNumSigma> sigma_deltas(const Mat12& cov, double gamma) {
  const Mat12 sym = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Mat12> llt(sym);
  const Mat12 l = llt.matrixL();
  if (llt.info() != Eigen::Success || !(l.diagonal().minCoeff() > 0.0)) {
    throw NumericalError("pose ukf: covariance not positive-definite");
  }
  std::array<Vec12, kNumSigma> deltas;
  deltas[0].setZero();
  for (int i = 0; i < kErrorDim; ++i) {
    deltas[1 + i] = gamma * l.col(i);
    deltas[1 + kErrorDim + i] = -gamma * l.col(i);
  }
  return deltas;
}

/// Weighted quaternion mean by iterative rotation-vector averaging.
UnitQuaternion quaternion_mean(const std::array<UnitQuaternion, kNumSigma>& qs,
                               const std::array<double, kNumSigma>& w,
                               const UnitQuaternion& seed) {
  UnitQuaternion mean = seed;
  for (int iter = 0; iter < 64; ++iter) {
    Vec3 err = Vec3::Zero();
    for (int i = 0; i < kNumSigma; ++i) {
      err += w[i] * (qs[i] * mean.conjugate()).to_rotation_vector();
    }
    mean = UnitQuaternion::from_rotation_vector(err) * mean;
    if (err.norm() < 1e-14) break;
  }
  return mean;
}

PoseState propagate_state(const PoseState& s, double dt) {
  PoseState out;
  out.t = s.t + s.v * dt;
  out.v = s.v;
  out.q = integrate_rotation(s.q, s.omega, dt);
  out.omega = s.omega;
  return out;
}

/// Measurement rows used by an update.
enum class Rows { kPoseVelocity, kVelocityOnly, kPoseOnly };

int rows_dim(Rows rows) { return rows == Rows::kPoseVelocity ? 12 : 6; }

struct Measurement {
  Vec3 t = Vec3::Zero();
  UnitQuaternion q;
  Vec3 v_o = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
};

Measurement measure_state(const PoseState& s) {
  return Measurement{s.t, s.q, s.v + s.t.cross(s.omega), s.omega};
}

/// Residual of m with respect to ref; the quaternion part is the rotation
/// vector of q_m * q_ref^-1.
Eigen::VectorXd residual(const Measurement& m, const Measurement& ref, Rows rows) {
  Eigen::VectorXd r(rows_dim(rows));
  int at = 0;
  if (rows != Rows::kVelocityOnly) {
    r.segment<3>(at) = m.t - ref.t;
    r.segment<3>(at + 3) = (m.q * ref.q.conjugate()).to_rotation_vector();
    at += 6;
  }
  if (rows != Rows::kPoseOnly) {
    r.segment<3>(at) = m.v_o - ref.v_o;
    r.segment<3>(at + 3) = m.omega - ref.omega;
  }
  return r;
}

Eigen::MatrixXd noise_matrix(const PoseFilterConfig& cfg, Rows rows) {
  const int dim = rows_dim(rows);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(dim, dim);
  int at = 0;
  if (rows != Rows::kVelocityOnly) {
    r.block<3, 3>(at, at) = cfg.r_t;
    r.block<3, 3>(at + 3, at + 3) = cfg.r_q;
    at += 6;
  }
  if (rows != Rows::kPoseOnly) {
    r.block<3, 3>(at, at) = cfg.r_v;
    r.block<3, 3>(at + 3, at + 3) = cfg.r_omega;
  }
  return r;
}

PoseBelief ukf_update(const PoseBelief& belief, const Measurement& actual, Rows rows,
                      const PoseFilterConfig& cfg) {
  const SigmaWeights w = make_weights(cfg);
  const auto deltas = sigma_deltas(belief.covariance, w.gamma);

  std::array<Measurement, kNumSigma> predicted;
  std::array<UnitQuaternion, kNumSigma> qs;
  for (int i = 0; i < kNumSigma; ++i) {
    predicted[i] = measure_state(retract(belief.mean, deltas[i]));
    qs[i] = predicted[i].q;
  }

  Measurement mean_meas;
  mean_meas.t.setZero();
  mean_meas.v_o.setZero();
  mean_meas.omega.setZero();
  for (int i = 0; i < kNumSigma; ++i) {
    mean_meas.t += w.wm[i] * predicted[i].t;
    mean_meas.v_o += w.wm[i] * predicted[i].v_o;
    mean_meas.omega += w.wm[i] * predicted[i].omega;
  }
  if (rows != Rows::kVelocityOnly) {
    mean_meas.q = quaternion_mean(qs, w.wm, predicted[0].q);
  }

  const int dim = rows_dim(rows);
  Eigen::MatrixXd innov_cov = noise_matrix(cfg, rows);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(kErrorDim, dim);
  for (int i = 0; i < kNumSigma; ++i) {
    const Eigen::VectorXd zeta = residual(predicted[i], mean_meas, rows);
    innov_cov += w.wc[i] * (zeta * zeta.transpose());
    cross += w.wc[i] * (deltas[i] * zeta.transpose());
  }

  const Eigen::LDLT<Eigen::MatrixXd> s_ldlt(innov_cov);
  if (s_ldlt.info() != Eigen::Success || !s_ldlt.isPositive() ||
      !(s_ldlt.vectorD().minCoeff() > 0.0)) {
    throw NumericalError("pose ukf: singular innovation covariance");
  }
  const Eigen::MatrixXd gain = s_ldlt.solve(cross.transpose()).transpose();

  const Eigen::VectorXd innovation = residual(actual, mean_meas, rows);
  const Vec12 correction = gain * innovation;

  PoseBelief out;
  out.mean = retract(belief.mean, correction);
  Mat12 cov = belief.covariance - gain * innov_cov * gain.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

}  // namespace

void PoseFilterConfig::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("pose filter: gamma must be positive");
  if (pose_delay < 1) throw ConfigError("pose filter: pose delay must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("pose filter: dt must be positive");
  if (!(ukf_alpha > 0.0)) throw ConfigError("pose filter: ukf_alpha must be positive");
  const auto check_psd = [](const Eigen::MatrixXd& m, const char* name) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() < -1e-12) {
      throw ConfigError(std::string("pose filter: ") + name +
                        " must be positive semi-definite");
    }
  };
  check_psd(q_t, "q_t");
  check_psd(q_q, "q_q");
  check_psd(r_t, "r_t");
  check_psd(r_q, "r_q");
  check_psd(r_v, "r_v");
  check_psd(r_omega, "r_omega");
}

Vec13 predict_measurement(const PoseState& state) {
  const Measurement m = measure_state(state);
  Vec13 out;
  out << m.t, m.q.wxyz(), m.v_o, m.omega;
  return out;
}

namespace pose_ukf {

PoseBelief predict(const PoseBelief& belief, const PoseFilterConfig& cfg) {
  const SigmaWeights w = make_weights(cfg);
  const auto deltas = sigma_deltas(belief.covariance, w.gamma);

  std::array<PoseState, kNumSigma> propagated;
  std::array<UnitQuaternion, kNumSigma> qs;
  for (int i = 0; i < kNumSigma; ++i) {
    propagated[i] = propagate_state(retract(belief.mean, deltas[i]), cfg.dt);
    qs[i] = propagated[i].q;
  }

  PoseState mean;
  mean.t.setZero();
  mean.v.setZero();
  mean.omega.setZero();
  for (int i = 0; i < kNumSigma; ++i) {
    mean.t += w.wm[i] * propagated[i].t;
    mean.v += w.wm[i] * propagated[i].v;
    mean.omega += w.wm[i] * propagated[i].omega;
  }
  mean.q = quaternion_mean(qs, w.wm, propagated[0].q);

  Mat12 cov = Mat12::Zero();
  for (int i = 0; i < kNumSigma; ++i) {
    const Vec12 d = local_coords(propagated[i], mean);
    cov += w.wc[i] * (d * d.transpose());
  }
  // Process noise: (t, v) block and omega block; the orientation receives
  // noise only through the angular velocity.
  cov.topLeftCorner<6, 6>() += cfg.q_t;
  cov.bottomRightCorner<3, 3>() += cfg.q_q;

  PoseBelief out;
  out.mean = mean;
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

PoseBelief update_velocity(const PoseBelief& belief, const Twist& measured,
                           const PoseFilterConfig& cfg) {
  Measurement m;
  m.v_o = measured.v_o;
  m.omega = measured.omega;
  return ukf_update(belief, m, Rows::kVelocityOnly, cfg);
}

PoseBelief update_pose_velocity(const PoseBelief& belief, const Pose& pose,
                                const Twist& velocity, const PoseFilterConfig& cfg) {
  Measurement m;
  m.t = pose.t;
  m.q = pose.q;
  m.v_o = velocity.v_o;
  m.omega = velocity.omega;
  return ukf_update(belief, m, Rows::kPoseVelocity, cfg);
}

PoseBelief update_pose_only(const PoseBelief& belief, const Pose& pose,
                            const PoseFilterConfig& cfg) {
  Measurement m;
  m.t = pose.t;
  m.q = pose.q;
  return ukf_update(belief, m, Rows::kPoseOnly, cfg);
}

}  // namespace pose_ukf

PoseUkf::PoseUkf(const PoseFilterConfig& cfg, std::size_t history_capacity,
                 std::shared_ptr<const TriangleMesh> mesh, const CameraIntrinsics& intr)
    : cfg_(cfg), capacity_(history_capacity), mesh_(std::move(mesh)), intr_(intr) {
  cfg_.validate();
  if (capacity_ < static_cast<std::size_t>(cfg_.pose_delay) + 1) {
    throw ConfigError("pose ukf: history capacity below pose delay + 1");
  }
  if (cfg_.use_outlier_rejection && !mesh_) {
    throw ConfigError("pose ukf: outlier rejection requires an object mesh");
  }
}

void PoseUkf::initialize(const Pose& seed, std::int64_t frame, const Twist& velocity,
                         std::shared_ptr<const DepthMap> depth) {
  belief_.mean.t = seed.t;
  belief_.mean.q = seed.q;
  belief_.mean.v.setZero();
  belief_.mean.omega.setZero();
  belief_.covariance.setZero();
  belief_.covariance.block<3, 3>(0, 0) = cfg_.init_var_t * Mat3::Identity();
  belief_.covariance.block<3, 3>(3, 3) = cfg_.init_var_v * Mat3::Identity();
  belief_.covariance.block<3, 3>(6, 6) = cfg_.init_var_rot * Mat3::Identity();
  belief_.covariance.block<3, 3>(9, 9) = cfg_.init_var_omega * Mat3::Identity();
  frame_ = frame;
  initialized_ = true;
  history_.clear();
  // The seed pose is the measurement itself; no velocity update runs here.
  push_record(HistoryRecord{frame, belief_, velocity, false, std::move(depth)});
}

const PoseBelief& PoseUkf::step(const Twist& velocity, std::int64_t frame,
                                std::shared_ptr<const DepthMap> depth) {
  if (!initialized_) {
    throw std::logic_error("pose ukf: step before initialization");
  }
  if (frame != frame_ + 1) {
    throw std::invalid_argument("pose ukf: expected frame " + std::to_string(frame_ + 1) +
                                ", got " + std::to_string(frame));
  }
  belief_ = pose_ukf::predict(belief_, cfg_);
  const PoseBelief rewind_point = belief_;
  if (cfg_.use_velocity_updates) {
    belief_ = pose_ukf::update_velocity(belief_, velocity, cfg_);
  }
  frame_ = frame;
  push_record(HistoryRecord{frame, rewind_point, velocity, cfg_.use_velocity_updates,
                            std::move(depth)});
  return belief_;
}

PoseOutcome PoseUkf::on_pose_measurement(const Pose& measured, std::int64_t origin_frame) {
  if (!initialized_) {
    throw std::logic_error("pose ukf: pose measurement before initialization");
  }
  if (origin_frame > frame_) {
    throw DataError("pose ukf: pose measurement from future frame " +
                    std::to_string(origin_frame));
  }
  HistoryRecord* origin = find_record(origin_frame);
  if (origin == nullptr) {
    std::cerr << "[flowtrack] warning: pose for frame " << origin_frame
              << " arrived after the history window; dropped\n";
    return PoseOutcome::kDropped;
  }

  const PoseBelief rewound = origin->rewind_belief;
  const PoseBelief with_pose =
      origin->has_velocity
          ? pose_ukf::update_pose_velocity(rewound, measured, origin->velocity, cfg_)
          : pose_ukf::update_pose_only(rewound, measured, cfg_);
  const PoseBelief without_pose =
      origin->has_velocity ? pose_ukf::update_velocity(rewound, origin->velocity, cfg_)
                           : rewound;

  bool accept = true;
  if (cfg_.use_outlier_rejection) {
    if (!origin->depth) {
      std::cerr << "[flowtrack] warning: no measured depth stored for frame "
                << origin_frame << "; outlier check skipped\n";
    } else {
      accept = false;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const DepthMap render_a = render_depth(*mesh_, with_pose.mean.pose(), intr_);
        const auto err_a = depth_error(render_a, *origin->depth, cfg_.min_depth_overlap);
        if (err_a.has_value()) {
          const DepthMap render_b = render_depth(*mesh_, without_pose.mean.pose(), intr_);
          const auto err_b = depth_error(render_b, *origin->depth, cfg_.min_depth_overlap);
          // Reject only when including the pose makes the depth fit worse by
          // more than gamma; an unverifiable velocity-only branch does not
          // condemn the pose.
          accept = !err_b.has_value() || (*err_a - *err_b) <= cfg_.gamma;
        }
      } catch (const std::exception& e) {
        std::cerr << "[flowtrack] warning: depth render failed (" << e.what()
                  << "); pose treated as outlier\n";
        accept = false;
      }
      render_seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  }

  belief_ = accept ? with_pose : without_pose;

  // Replay the buffered velocity updates up to the current frame, refreshing
  // each frame's rewind snapshot along the way.
  for (std::int64_t f = origin_frame + 1; f <= frame_; ++f) {
    HistoryRecord* rec = find_record(f);
    belief_ = pose_ukf::predict(belief_, cfg_);
    rec->rewind_belief = belief_;
    if (rec->has_velocity) {
      belief_ = pose_ukf::update_velocity(belief_, rec->velocity, cfg_);
    }
  }
  return accept ? PoseOutcome::kAccepted : PoseOutcome::kRejectedOutlier;
}

HistoryRecord* PoseUkf::find_record(std::int64_t frame) {
  if (history_.empty() || frame < history_.front().frame || frame > history_.back().frame) {
    return nullptr;
  }
  return &history_[static_cast<std::size_t>(frame - history_.front().frame)];
}

void PoseUkf::push_record(HistoryRecord rec) {
  history_.push_back(std::move(rec));
  if (history_.size() > capacity_) {
    history_.pop_front();
  }
}

}  // namespace flowtrack
