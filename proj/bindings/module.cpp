#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "flowtrack/depth_render.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/flow_sync.hpp"
#include "flowtrack/geometry.hpp"
#include "flowtrack/metrics.hpp"
#include "flowtrack/pose_ukf.hpp"
#include "flowtrack/scene_sim.hpp"
#include "flowtrack/sequence_io.hpp"
#include "flowtrack/tracker.hpp"
#include "flowtrack/velocity_kf.hpp"

namespace py = pybind11;
using namespace flowtrack;

namespace {

py::array_t<float> depth_to_array(const DepthMap& d) {
  py::array_t<float> out({d.height, d.width});
  std::copy(d.data.begin(), d.data.end(), out.mutable_data());
  return out;
}

DepthMap depth_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw std::invalid_argument("depth array must be HxW");
  DepthMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), d.data.begin());
  return d;
}

py::array_t<float> flow_to_array(const FlowField& f) {
  py::array_t<float> out({f.height, f.width, 2});
  std::copy(f.data.begin(), f.data.end(), out.mutable_data());
  return out;
}

FlowField flow_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 3 || a.shape(2) != 2) throw std::invalid_argument("flow array must be HxWx2");
  FlowField f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), f.data.begin());
  return f;
}

py::array_t<std::uint8_t> mask_to_array(const Mask& m) {
  py::array_t<std::uint8_t> out({m.height(), m.width()});
  std::copy(m.bitmap().begin(), m.bitmap().end(), out.mutable_data());
  return out;
}

Mask mask_from_array(py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw std::invalid_argument("mask array must be HxW");
  Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  auto& bits = m.bitmap();
  for (py::ssize_t i = 0; i < a.size(); ++i) bits[static_cast<std::size_t>(i)] = a.data()[i] ? 1 : 0;
  m.recount();
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "optical-flow-aided 6D object pose and velocity tracking";

  py::register_exception<ConfigError>(m, "FlowtrackConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "FlowtrackDataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "FlowtrackNumericalError", PyExc_ArithmeticError);

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             CameraIntrinsics i{fx, fy, cx, cy, width, height};
             i.validate();
             return i;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readwrite("fx", &CameraIntrinsics::fx)
      .def_readwrite("fy", &CameraIntrinsics::fy)
      .def_readwrite("cx", &CameraIntrinsics::cx)
      .def_readwrite("cy", &CameraIntrinsics::cy)
      .def_readwrite("width", &CameraIntrinsics::width)
      .def_readwrite("height", &CameraIntrinsics::height);

  py::class_<UnitQuaternion>(m, "UnitQuaternion")
      .def(py::init<>())
      .def(py::init<double, double, double, double>(), py::arg("w"), py::arg("x"),
           py::arg("y"), py::arg("z"))
      .def_static("identity", &UnitQuaternion::identity)
      .def_static("from_rotation_vector", &UnitQuaternion::from_rotation_vector)
      .def("to_rotation_vector", &UnitQuaternion::to_rotation_vector)
      .def_property_readonly("w", &UnitQuaternion::w)
      .def_property_readonly("x", &UnitQuaternion::x)
      .def_property_readonly("y", &UnitQuaternion::y)
      .def_property_readonly("z", &UnitQuaternion::z)
      .def("wxyz", &UnitQuaternion::wxyz)
      .def("rotate", &UnitQuaternion::rotate)
      .def("rotation_matrix", &UnitQuaternion::rotation_matrix)
      .def("conjugate", &UnitQuaternion::conjugate)
      .def("__mul__", &UnitQuaternion::operator*)
      .def("__repr__", [](const UnitQuaternion& q) {
        return "UnitQuaternion(w=" + std::to_string(q.w()) + ", x=" + std::to_string(q.x()) +
               ", y=" + std::to_string(q.y()) + ", z=" + std::to_string(q.z()) + ")";
      });

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const Vec3& t, const UnitQuaternion& q) { return Pose{t, q}; }),
           py::arg("t"), py::arg("q"))
      .def_readwrite("t", &Pose::t)
      .def_readwrite("q", &Pose::q);

  py::class_<Twist>(m, "Twist")
      .def(py::init<>())
      .def(py::init([](const Vec3& v_o, const Vec3& omega) { return Twist{v_o, omega}; }),
           py::arg("v_o"), py::arg("omega"))
      .def_readwrite("v_o", &Twist::v_o)
      .def_readwrite("omega", &Twist::omega)
      .def("vector", &Twist::vector);

  m.def("project", &project, py::arg("p"), py::arg("intrinsics"));
  m.def("backproject", &backproject, py::arg("u"), py::arg("v"), py::arg("d"),
        py::arg("intrinsics"));
  m.def("flow_jacobian_row", &flow_jacobian_row, py::arg("u"), py::arg("v"), py::arg("d"),
        py::arg("intrinsics"), py::arg("dt"));
  m.def("quat_transition", &quat_transition, py::arg("omega"), py::arg("dt"));
  m.def("integrate_rotation", &integrate_rotation, py::arg("q"), py::arg("omega"),
        py::arg("dt"));
  m.def("geodesic_angle", &geodesic_angle);
  m.def("compose", &compose);
  m.def("pose_inverse", &inverse);
  m.def("transform_point", &transform_point);
  m.def("twist_step", &twist_step, py::arg("twist"), py::arg("dt"));

  // image types travel as numpy arrays
  m.def("propagate_mask",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> mask,
           py::array_t<float, py::array::c_style | py::array::forcecast> flow) {
          return mask_to_array(propagate_mask(mask_from_array(mask), flow_from_array(flow)));
        },
        py::arg("mask"), py::arg("flow"));
  m.def("mask_iou",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> a,
           py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> b) {
          return mask_iou(mask_from_array(a), mask_from_array(b));
        });

  py::class_<MaskSynchronizer>(m, "MaskSynchronizer")
      .def(py::init<int, std::int64_t, std::size_t>(), py::arg("delay_frames"),
           py::arg("start_frame") = 0, py::arg("buffer_capacity") = 0)
      .def("advance",
           [](MaskSynchronizer& s,
              py::array_t<float, py::array::c_style | py::array::forcecast> flow,
              std::int64_t frame) { return mask_to_array(s.advance(flow_from_array(flow), frame)); },
           py::arg("flow"), py::arg("frame"))
      .def("catch_up",
           [](MaskSynchronizer& s,
              py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> mask,
              std::int64_t origin) { return mask_to_array(s.catch_up(mask_from_array(mask), origin)); },
           py::arg("mask"), py::arg("origin_frame"))
      .def_property_readonly("initialized", &MaskSynchronizer::initialized)
      .def_property_readonly("current_frame", &MaskSynchronizer::current_frame)
      .def("current_mask",
           [](const MaskSynchronizer& s) { return mask_to_array(s.current_mask()); });

  py::class_<TriangleMesh>(m, "TriangleMesh")
      .def(py::init<>())
      .def_static("box", &TriangleMesh::box, py::arg("sx"), py::arg("sy"), py::arg("sz"))
      .def_static("cylinder", &TriangleMesh::cylinder, py::arg("radius"), py::arg("height"),
                  py::arg("segments") = 24)
      .def_static("load_obj", &TriangleMesh::load_obj)
      .def("save_obj", &TriangleMesh::save_obj)
      .def_property_readonly("vertices",
                             [](const TriangleMesh& mesh) {
                               py::array_t<double> out(
                                   {static_cast<py::ssize_t>(mesh.vertices.size()),
                                    static_cast<py::ssize_t>(3)});
                               auto r = out.mutable_unchecked<2>();
                               for (py::ssize_t i = 0; i < r.shape(0); ++i)
                                 for (py::ssize_t j = 0; j < 3; ++j)
                                   r(i, j) = mesh.vertices[static_cast<std::size_t>(i)](j);
                               return out;
                             })
      .def_property_readonly("triangles", [](const TriangleMesh& mesh) {
        py::array_t<int> out({static_cast<py::ssize_t>(mesh.triangles.size()),
                              static_cast<py::ssize_t>(3)});
        auto r = out.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < r.shape(0); ++i)
          for (py::ssize_t j = 0; j < 3; ++j)
            r(i, j) = mesh.triangles[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        return out;
      });

  m.def("render_depth",
        [](const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& intr) {
          return depth_to_array(render_depth(mesh, pose, intr));
        },
        py::arg("mesh"), py::arg("pose"), py::arg("intrinsics"));
  m.def("depth_error",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
           py::array_t<float, py::array::c_style | py::array::forcecast> b, int min_overlap)
            -> std::optional<double> {
          return depth_error(depth_from_array(a), depth_from_array(b), min_overlap);
        },
        py::arg("rendered"), py::arg("measured"), py::arg("min_overlap") = 50);

  // velocity filter
  py::class_<TwistFilterConfig>(m, "TwistFilterConfig")
      .def(py::init<>())
      .def_readwrite("q_v", &TwistFilterConfig::q_v)
      .def_readwrite("q_omega", &TwistFilterConfig::q_omega)
      .def_readwrite("sigma_flow", &TwistFilterConfig::sigma_flow)
      .def_readwrite("max_pixels", &TwistFilterConfig::max_pixels)
      .def_readwrite("dt", &TwistFilterConfig::dt);

  py::class_<TwistBelief>(m, "TwistBelief")
      .def(py::init<>())
      .def_readwrite("mean", &TwistBelief::mean)
      .def_readwrite("covariance", &TwistBelief::covariance);

  auto vkf = m.def_submodule("velocity_kf", "flow-driven twist Kalman filter");
  vkf.def("predict", &velocity_kf::predict);
  vkf.def("step",
          [](const TwistBelief& belief,
             py::array_t<float, py::array::c_style | py::array::forcecast> flow,
             py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> prev_mask,
             py::array_t<float, py::array::c_style | py::array::forcecast> prev_depth,
             const CameraIntrinsics& intr, const TwistFilterConfig& cfg) {
            const auto res = velocity_kf::step(belief, flow_from_array(flow),
                                               mask_from_array(prev_mask),
                                               depth_from_array(prev_depth), intr, cfg);
            return py::make_tuple(res.belief, res.measured, res.updated);
          },
          py::arg("belief"), py::arg("flow"), py::arg("prev_mask"), py::arg("prev_depth"),
          py::arg("intrinsics"), py::arg("config"));

  // pose filter
  py::class_<PoseState>(m, "PoseState")
      .def(py::init<>())
      .def_readwrite("t", &PoseState::t)
      .def_readwrite("v", &PoseState::v)
      .def_readwrite("q", &PoseState::q)
      .def_readwrite("omega", &PoseState::omega);

  py::class_<PoseBelief>(m, "PoseBelief")
      .def(py::init<>())
      .def_readwrite("mean", &PoseBelief::mean)
      .def_readwrite("covariance", &PoseBelief::covariance);

  py::class_<PoseFilterConfig>(m, "PoseFilterConfig")
      .def(py::init<>())
      .def_readwrite("q_t", &PoseFilterConfig::q_t)
      .def_readwrite("q_q", &PoseFilterConfig::q_q)
      .def_readwrite("r_t", &PoseFilterConfig::r_t)
      .def_readwrite("r_q", &PoseFilterConfig::r_q)
      .def_readwrite("r_v", &PoseFilterConfig::r_v)
      .def_readwrite("r_omega", &PoseFilterConfig::r_omega)
      .def_readwrite("gamma", &PoseFilterConfig::gamma)
      .def_readwrite("pose_delay", &PoseFilterConfig::pose_delay)
      .def_readwrite("dt", &PoseFilterConfig::dt)
      .def_readwrite("use_outlier_rejection", &PoseFilterConfig::use_outlier_rejection)
      .def_readwrite("use_velocity_updates", &PoseFilterConfig::use_velocity_updates);

  m.def("predict_measurement", &predict_measurement);
  auto pukf = m.def_submodule("pose_ukf", "quaternion error-state unscented Kalman filter");
  pukf.def("predict", &pose_ukf::predict);
  pukf.def("update_velocity", &pose_ukf::update_velocity);
  pukf.def("update_pose_velocity", &pose_ukf::update_pose_velocity);
  pukf.def("update_pose_only", &pose_ukf::update_pose_only);

  py::enum_<PoseOutcome>(m, "PoseOutcome")
      .value("ACCEPTED", PoseOutcome::kAccepted)
      .value("REJECTED_OUTLIER", PoseOutcome::kRejectedOutlier)
      .value("DROPPED", PoseOutcome::kDropped);

  py::class_<PoseUkf>(m, "PoseUkf")
      .def(py::init([](const PoseFilterConfig& cfg, std::size_t capacity,
                       std::optional<TriangleMesh> mesh, const CameraIntrinsics& intr) {
             std::shared_ptr<const TriangleMesh> mesh_ptr;
             if (mesh.has_value()) mesh_ptr = std::make_shared<TriangleMesh>(*mesh);
             return PoseUkf(cfg, capacity, mesh_ptr, intr);
           }),
           py::arg("config"), py::arg("history_capacity"), py::arg("mesh"),
           py::arg("intrinsics"))
      .def("initialize",
           [](PoseUkf& f, const Pose& seed, std::int64_t frame, const Twist& velocity,
              std::optional<py::array_t<float, py::array::c_style | py::array::forcecast>>
                  depth) {
             std::shared_ptr<const DepthMap> d;
             if (depth.has_value()) d = std::make_shared<DepthMap>(depth_from_array(*depth));
             f.initialize(seed, frame, velocity, d);
           },
           py::arg("seed"), py::arg("frame"), py::arg("velocity") = Twist{},
           py::arg("depth") = std::nullopt)
      .def("step",
           [](PoseUkf& f, const Twist& velocity, std::int64_t frame,
              std::optional<py::array_t<float, py::array::c_style | py::array::forcecast>>
                  depth) {
             std::shared_ptr<const DepthMap> d;
             if (depth.has_value()) d = std::make_shared<DepthMap>(depth_from_array(*depth));
             return f.step(velocity, frame, d);
           },
           py::arg("velocity"), py::arg("frame"), py::arg("depth") = std::nullopt)
      .def("on_pose_measurement", &PoseUkf::on_pose_measurement, py::arg("measured"),
           py::arg("origin_frame"))
      .def_property_readonly("initialized", &PoseUkf::initialized)
      .def_property_readonly("current_frame", &PoseUkf::current_frame)
      .def_property_readonly("belief", &PoseUkf::belief);

  // metrics
  m.def("add_error",
        [](const Pose& est, const Pose& gt,
           py::array_t<double, py::array::c_style | py::array::forcecast> points) {
          if (points.ndim() != 2 || points.shape(1) != 3)
            throw std::invalid_argument("model points must be Nx3");
          std::vector<Vec3> pts(static_cast<std::size_t>(points.shape(0)));
          auto r = points.unchecked<2>();
          for (py::ssize_t i = 0; i < points.shape(0); ++i)
            pts[static_cast<std::size_t>(i)] = Vec3(r(i, 0), r(i, 1), r(i, 2));
          return add_error(est, gt, pts);
        },
        py::arg("est"), py::arg("gt"), py::arg("model_points"));
  m.def("add_auc", &add_auc, py::arg("errors"), py::arg("threshold_max") = 0.1);

  // simulator and end-to-end pipeline
  py::class_<TrajectorySegment>(m, "TrajectorySegment")
      .def(py::init([](double duration, const Twist& twist) {
             return TrajectorySegment{duration, twist};
           }),
           py::arg("duration"), py::arg("twist"))
      .def_readwrite("duration", &TrajectorySegment::duration)
      .def_readwrite("twist", &TrajectorySegment::twist);

  py::class_<TrajectorySpec>(m, "TrajectorySpec")
      .def(py::init<>())
      .def_readwrite("initial_pose", &TrajectorySpec::initial_pose)
      .def_readwrite("segments", &TrajectorySpec::segments);

  m.def("orbit_trajectory", &orbit_trajectory, py::arg("speed") = 0.3,
        py::arg("omega_rad") = 1.5707963267948966, py::arg("axis_dir") = Vec3(0, 0, 1),
        py::arg("depth") = 1.0, py::arg("orbit_radius") = 0.03, py::arg("duration") = 60.0,
        py::arg("initial_rotation") =
            UnitQuaternion::from_rotation_vector(Vec3(0.25, -0.3, 0.1)));
  m.def("drift_trajectory", &drift_trajectory, py::arg("velocity"),
        py::arg("start") = Vec3(0, 0, 1.0), py::arg("duration") = 60.0);
  m.def("spin_trajectory", &spin_trajectory, py::arg("omega"),
        py::arg("center") = Vec3(0, 0, 1.0), py::arg("duration") = 60.0);
  m.def("static_trajectory", &static_trajectory, py::arg("position") = Vec3(0, 0, 1.0),
        py::arg("duration") = 60.0);

  py::class_<CorruptionSpec>(m, "CorruptionSpec")
      .def(py::init<>())
      .def_readwrite("mask_delay", &CorruptionSpec::mask_delay)
      .def_readwrite("pose_delay", &CorruptionSpec::pose_delay)
      .def_readwrite("pose_noise_t", &CorruptionSpec::pose_noise_t)
      .def_readwrite("pose_noise_rot", &CorruptionSpec::pose_noise_rot)
      .def_readwrite("outlier_rate", &CorruptionSpec::outlier_rate)
      .def_readwrite("outlier_t", &CorruptionSpec::outlier_t)
      .def_readwrite("outlier_rot", &CorruptionSpec::outlier_rot)
      .def_readwrite("flow_noise", &CorruptionSpec::flow_noise)
      .def_readwrite("depth_noise", &CorruptionSpec::depth_noise)
      .def_readwrite("mask_miss_rate", &CorruptionSpec::mask_miss_rate)
      .def_readwrite("zero_occluded_flow", &CorruptionSpec::zero_occluded_flow);

  py::class_<SceneSimulator>(m, "SceneSimulator")
      .def(py::init<TrajectorySpec, CorruptionSpec, TriangleMesh, CameraIntrinsics, double,
                    int, std::uint64_t>(),
           py::arg("trajectory"), py::arg("corruption"), py::arg("mesh"),
           py::arg("intrinsics"), py::arg("fps"), py::arg("n_frames"), py::arg("seed"));

  m.def("write_sequence", &write_sequence, py::arg("directory"), py::arg("simulator"),
        "stream a simulated sequence to disk; returns the frame count");

  py::class_<AblationSwitches>(m, "AblationSwitches")
      .def(py::init<>())
      .def_readwrite("use_velocity", &AblationSwitches::use_velocity)
      .def_readwrite("use_pose", &AblationSwitches::use_pose)
      .def_readwrite("use_mask_sync", &AblationSwitches::use_mask_sync)
      .def_readwrite("use_pose_sync", &AblationSwitches::use_pose_sync)
      .def_readwrite("use_outlier_rejection", &AblationSwitches::use_outlier_rejection);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("twist", &RunConfig::twist)
      .def_readwrite("pose", &RunConfig::pose)
      .def_readwrite("ablation", &RunConfig::ablation)
      .def_readwrite("twist_prior_var", &RunConfig::twist_prior_var)
      .def_readwrite("mask_delay", &RunConfig::mask_delay)
      .def_static("from_json_file", &RunConfig::from_json_file)
      .def("save_json", &RunConfig::save_json);

  py::class_<TraceRmse>(m, "TraceRmse")
      .def_readonly("e_t_cm", &TraceRmse::e_t_cm)
      .def_readonly("e_a_deg", &TraceRmse::e_a_deg)
      .def_readonly("e_v_cm_s", &TraceRmse::e_v_cm_s)
      .def_readonly("e_omega_deg_s", &TraceRmse::e_omega_deg_s)
      .def_readonly("has_velocity", &TraceRmse::has_velocity);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("add_auc_percent", &EvalReport::add_auc_percent)
      .def_readonly("rmse", &EvalReport::rmse)
      .def_readonly("frames", &EvalReport::frames)
      .def("table", &EvalReport::table);

  py::class_<StageTimings>(m, "StageTimings")
      .def_readonly("mask_sync_ms", &StageTimings::mask_sync_ms)
      .def_readonly("velocity_ms", &StageTimings::velocity_ms)
      .def_readonly("pose_ms", &StageTimings::pose_ms)
      .def_readonly("render_ms", &StageTimings::render_ms)
      .def_readonly("frames", &StageTimings::frames)
      .def("per_frame_ms", &StageTimings::per_frame_ms)
      .def("summary", &StageTimings::summary);

  py::class_<TrackResult>(m, "TrackResult")
      .def_readonly("timings", &TrackResult::timings)
      .def_readonly("poses_accepted", &TrackResult::poses_accepted)
      .def_readonly("poses_rejected", &TrackResult::poses_rejected)
      .def_readonly("poses_dropped", &TrackResult::poses_dropped)
      .def_property_readonly("frames", [](const TrackResult& r) {
        py::list out;
        for (const auto& e : r.estimates) {
          py::dict d;
          d["frame"] = e.frame;
          d["t"] = e.t;
          d["q"] = e.q;
          d["v"] = e.v;
          d["omega"] = e.omega;
          d["pose_accepted"] = e.pose_accepted;
          out.append(d);
        }
        return out;
      });

  m.def("run_tracker_on_dir", &run_tracker_on_dir, py::arg("sequence_dir"), py::arg("config"),
        py::arg("out_dir"), py::arg("overlay") = std::nullopt,
        "run the full pipeline on an on-disk sequence; writes estimates.csv/velocities.csv");

  m.def("evaluate_run",
        [](const std::filesystem::path& seq_dir, const std::filesystem::path& est_dir,
           double add_threshold) {
          SequenceReader reader(seq_dir);
          const auto estimates = read_estimates(est_dir / "estimates.csv");
          std::vector<TwistRow> velocities;
          if (std::filesystem::exists(est_dir / "velocities.csv")) {
            velocities = read_velocities(est_dir / "velocities.csv");
          }
          return evaluate_estimates(reader, estimates, velocities, add_threshold);
        },
        py::arg("sequence_dir"), py::arg("estimate_dir"), py::arg("add_threshold") = 0.1);

  m.def("evaluate_baseline_zoh",
        [](const std::filesystem::path& seq_dir, double add_threshold) {
          SequenceReader reader(seq_dir);
          return evaluate_baseline_zoh(reader, add_threshold);
        },
        py::arg("sequence_dir"), py::arg("add_threshold") = 0.1);
}
