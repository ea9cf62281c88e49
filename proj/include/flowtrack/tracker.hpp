#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flowtrack/metrics.hpp"
#include "flowtrack/pose_ukf.hpp"
#include "flowtrack/scene_sim.hpp"
#include "flowtrack/sequence_io.hpp"
#include "flowtrack/velocity_kf.hpp"

namespace flowtrack {

/// Pipeline components that can be selectively disabled for ablations.
struct AblationSwitches {
  bool use_velocity = true;          // flow-based twist filter feeding the pose filter
  bool use_pose = true;              // delayed pose measurements (first pose always seeds)
  bool use_mask_sync = true;         // flow-propagated masks vs raw delayed masks
  bool use_pose_sync = true;         // rewind-replay vs applying poses at arrival
  bool use_outlier_rejection = true; // render-based pose outlier test
};

struct RunConfig {
  TwistFilterConfig twist;
  PoseFilterConfig pose;
  AblationSwitches ablation;
  double twist_prior_var = 10.0;  // initial twist covariance (diagonal)
  int mask_delay = 6;             // nominal N_s, sizes the flow buffer

  /// Throws ConfigError when inconsistent (e.g. both velocity and pose
  /// measurements disabled).
  void validate() const;

  static RunConfig from_json_file(const std::filesystem::path& path);
  void save_json(const std::filesystem::path& path) const;
};

/// One frame of tracker input, decoupled from where frames come from.
struct TrackerInput {
  std::int64_t frame = 0;
  std::shared_ptr<const DepthMap> depth;
  FlowField flow;  // empty on the first frame
  std::vector<MaskEvent> mask_events;
  std::vector<PoseEvent> pose_events;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual const CameraIntrinsics& intrinsics() const = 0;
  virtual double fps() const = 0;
  virtual std::optional<TrackerInput> next() = 0;
};

/// Streams frames from an in-memory bundle.
class BundleSource : public FrameSource {
 public:
  explicit BundleSource(const SequenceBundle& bundle) : bundle_(bundle) {}
  const CameraIntrinsics& intrinsics() const override { return bundle_.intrinsics; }
  double fps() const override { return bundle_.fps; }
  std::optional<TrackerInput> next() override;

 private:
  const SequenceBundle& bundle_;
  std::size_t at_ = 0;
};

/// Streams frames straight out of the simulator.
class SimulatorSource : public FrameSource {
 public:
  explicit SimulatorSource(SceneSimulator& sim) : sim_(sim) {}
  const CameraIntrinsics& intrinsics() const override { return sim_.intrinsics(); }
  double fps() const override { return sim_.fps(); }
  std::optional<TrackerInput> next() override;

 private:
  SceneSimulator& sim_;
};

/// Streams frames from an on-disk sequence.
class ReaderSource : public FrameSource {
 public:
  explicit ReaderSource(const SequenceReader& reader) : reader_(reader) {}
  const CameraIntrinsics& intrinsics() const override { return reader_.intrinsics(); }
  double fps() const override { return reader_.fps(); }
  std::optional<TrackerInput> next() override;

 private:
  const SequenceReader& reader_;
  std::int64_t at_ = 0;
  std::size_t mask_at_ = 0;
  std::size_t pose_at_ = 0;
};

/// Wall-clock cost per pipeline stage, excluding input I/O.
struct StageTimings {
  double mask_sync_ms = 0.0;
  double velocity_ms = 0.0;
  double pose_ms = 0.0;    // includes render_ms
  double render_ms = 0.0;  // outlier-rejection depth renders
  int frames = 0;

  double total_ms() const { return mask_sync_ms + velocity_ms + pose_ms; }
  double per_frame_ms() const { return frames > 0 ? total_ms() / frames : 0.0; }
  std::string summary() const;
};

struct TrackResult {
  std::vector<EstimateRow> estimates;
  std::vector<TwistRow> velocities;  // empty when the velocity stage is disabled
  StageTimings timings;
  int poses_accepted = 0;
  int poses_rejected = 0;
  int poses_dropped = 0;
};

/// Runs the full pipeline over a frame source. The mesh may be null when
/// outlier rejection is disabled. on_estimate, when set, is invoked once per
/// emitted row (used for overlay rendering); its cost is not timed.
TrackResult run_tracker(FrameSource& source, const RunConfig& cfg,
                        std::shared_ptr<const TriangleMesh> mesh,
                        const std::function<void(const EstimateRow&)>& on_estimate = {});

/// Disk-to-disk convenience: reads a sequence directory, writes estimates.csv
/// and velocities.csv (and silhouette overlays when requested or when the
/// sequence has no ground truth) into out_dir, and prints stage timings.
TrackResult run_tracker_on_dir(const std::filesystem::path& sequence_dir,
                               const RunConfig& cfg, const std::filesystem::path& out_dir,
                               std::optional<bool> overlay = std::nullopt);

/// Aligns estimate rows with the sequence ground truth and computes metrics;
/// model points are the mesh vertices.
EvalReport evaluate_estimates(const SequenceReader& reader,
                              const std::vector<EstimateRow>& estimates,
                              const std::vector<TwistRow>& velocities,
                              double add_threshold = 0.1);

/// Zero-order-hold baseline: evaluates the raw delayed pose stream held to
/// the frame clock against the ground truth (no velocity metrics).
EvalReport evaluate_baseline_zoh(const SequenceReader& reader, double add_threshold = 0.1);

/// One row of the ablation matrix.
struct AblationResult {
  std::string variant;
  EvalReport report;
};

/// Runs the ablation matrix (full pipeline plus one-switch-off variants) over
/// a sequence directory. Estimate CSVs land in out_dir/<variant>/.
std::vector<AblationResult> run_ablations(const std::filesystem::path& sequence_dir,
                                          const RunConfig& base_cfg,
                                          const std::filesystem::path& out_dir);

std::string ablation_table(const std::vector<AblationResult>& results);

}  // namespace flowtrack
