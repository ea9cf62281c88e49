#include <doctest.h>

#include <random>

#include "flowtrack/errors.hpp"
#include "flowtrack/velocity_kf.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

using namespace flowtrack;
using namespace flowtrack::velocity_kf;
using flowtrack::testing::covariance_form_update;
using flowtrack::testing::random_spd;
using flowtrack::testing::random_vector;

namespace {

const CameraIntrinsics kIntr{600.0, 600.0, 320.0, 240.0, 640, 480};

TwistFilterConfig test_config() {
  TwistFilterConfig cfg;
  cfg.dt = 1.0 / 30.0;
  return cfg;
}

/// Flow synthesized directly from the first-order model at given pixels.
struct SynthScene {
  FlowField flow{640, 480};
  Mask mask{640, 480};
  DepthMap depth{640, 480};
};

SynthScene synth_scene(const Twist& twist, const std::vector<std::array<int, 2>>& pixels,
                       double pixel_depth, double dt) {
  SynthScene s;
  for (const auto& px : pixels) {
    s.mask.insert(px[0], px[1]);
    s.depth.set(px[0], px[1], static_cast<float>(pixel_depth));
    const Vec2 f = flow_jacobian_row(px[0], px[1], pixel_depth, kIntr, dt) * twist.vector();
    s.flow.set(px[0], px[1], static_cast<float>(f.x()), static_cast<float>(f.y()));
  }
  return s;
}

std::vector<std::array<int, 2>> spread_pixels() {
  return {{100, 100}, {540, 100}, {100, 380}, {540, 380}, {320, 240}, {200, 300},
          {450, 150}, {320, 100}, {100, 240}, {540, 240}};
}

}  // namespace

TEST_SUITE("velocity_kf") {

TEST_CASE("predict keeps the mean and inflates the covariance") {
  TwistFilterConfig cfg = test_config();
  TwistBelief b;
  b.mean = Twist{Vec3(1, 0, 0), Vec3::Zero()};
  const TwistBelief out = predict(b, cfg);
  CHECK((out.mean.vector() - b.mean.vector()).norm() == doctest::Approx(0.0));
  CHECK(out.covariance.trace() > b.covariance.trace());

  cfg.q_v.setZero();
  cfg.q_omega.setZero();
  const TwistBelief frozen = predict(b, cfg);
  CHECK((frozen.covariance - b.covariance).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("single pixel at the principal point predicts flow (2, 0)") {
  // twist (0.1,0,0): flow = fx * 0.1 * dt = 600 * 0.1 / 30 = 2 px
  const TwistFilterConfig cfg = test_config();
  const Twist twist{Vec3(0.1, 0, 0), Vec3::Zero()};
  const SynthScene s = synth_scene(twist, {{320, 240}}, 1.0, cfg.dt);
  const auto meas = build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg);
  REQUIRE(meas.has_value());
  CHECK(meas->pixel_count == 1);
  CHECK(meas->flow(0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(meas->flow(1) == doctest::Approx(0.0));
}

TEST_CASE("pixels with invalid depth are skipped; all-invalid means no measurement") {
  const TwistFilterConfig cfg = test_config();
  SynthScene s = synth_scene(Twist{}, spread_pixels(), 1.0, cfg.dt);
  for (auto& d : s.depth.data) d = 0.0f;
  CHECK_FALSE(build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg).has_value());
}

TEST_CASE("measurement shapes: n pixels give 2n rows") {
  const TwistFilterConfig cfg = test_config();
  const auto pixels = spread_pixels();
  const SynthScene s = synth_scene(Twist{}, pixels, 1.0, cfg.dt);
  const auto meas = build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg);
  REQUIRE(meas.has_value());
  CHECK(meas->pixel_count == static_cast<int>(pixels.size()));
  CHECK(meas->flow.size() == 2 * static_cast<Eigen::Index>(pixels.size()));
  CHECK(meas->jacobian.rows() == meas->flow.size());
  CHECK(meas->jacobian.cols() == 6);
}

TEST_CASE("the pixel cap subsamples deterministically") {
  TwistFilterConfig cfg = test_config();
  cfg.max_pixels = 100;
  Mask mask(640, 480);
  DepthMap depth(640, 480);
  FlowField flow(640, 480);
  for (int v = 100; v < 140; ++v)
    for (int u = 100; u < 140; ++u) {
      mask.insert(u, v);
      depth.set(u, v, 1.0f);
    }
  const auto a = build_flow_measurement(flow, mask, depth, kIntr, cfg);
  const auto b = build_flow_measurement(flow, mask, depth, kIntr, cfg);
  REQUIRE(a.has_value());
  CHECK(a->pixel_count <= cfg.max_pixels);
  CHECK(a->pixel_count >= cfg.max_pixels / 2);
  CHECK((a->jacobian - b->jacobian).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("update recovers an exact twist from noiseless first-order flow") {
  const TwistFilterConfig cfg = test_config();
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Twist truth{random_vector(rng, 0.2), random_vector(rng, 1.0)};
    const SynthScene s = synth_scene(truth, spread_pixels(), 1.2, cfg.dt);
    const auto meas = build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg);
    REQUIRE(meas.has_value());
    TwistBelief prior;
    prior.covariance = 1e6 * Mat6::Identity();
    const TwistBelief post = update(prior, *meas, cfg);
    CHECK((post.mean.vector() - truth.vector()).cwiseAbs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("zero flow over a spread mask pulls the posterior to zero twist") {
  const TwistFilterConfig cfg = test_config();
  const SynthScene s = synth_scene(Twist{}, spread_pixels(), 1.0, cfg.dt);
  const auto meas = build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg);
  TwistBelief prior;
  prior.covariance = 1e6 * Mat6::Identity();
  const TwistBelief post = update(prior, *meas, cfg);
  CHECK(post.mean.vector().cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("information form equals the covariance form") {
  std::mt19937_64 rng(37);
  std::uniform_int_distribution<int> n_pixels(3, 50);
  std::uniform_real_distribution<double> upix(20.0, 620.0), vpix(20.0, 460.0),
      depth(0.4, 2.5);
  TwistFilterConfig cfg = test_config();
  for (int trial = 0; trial < 100; ++trial) {
    const int n = n_pixels(rng);
    FlowMeasurement meas;
    meas.pixel_count = n;
    meas.flow.resize(2 * n);
    meas.jacobian.resize(2 * n, 6);
    for (int i = 0; i < n; ++i) {
      meas.jacobian.middleRows<2>(2 * i) =
          flow_jacobian_row(upix(rng), vpix(rng), depth(rng), kIntr, cfg.dt);
      meas.flow(2 * i) = random_vector(rng, 1.0).x();
      meas.flow(2 * i + 1) = random_vector(rng, 1.0).x();
    }
    TwistBelief prior;
    prior.mean = Twist{random_vector(rng, 0.3), random_vector(rng, 1.0)};
    prior.covariance = random_spd<6>(rng, 0.05, 1.0);
    cfg.sigma_flow = 1.0;

    const TwistBelief fast = update(prior, meas, cfg);
    const TwistBelief reference = covariance_form_update(prior, meas, cfg.sigma_flow);
    CHECK((fast.mean.vector() - reference.mean.vector()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((fast.covariance - reference.covariance).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("posterior is invariant to pixel ordering") {
  const TwistFilterConfig cfg = test_config();
  std::mt19937_64 rng(41);
  const Twist truth{random_vector(rng, 0.2), random_vector(rng, 0.8)};
  const SynthScene s = synth_scene(truth, spread_pixels(), 1.0, cfg.dt);
  const auto meas = build_flow_measurement(s.flow, s.mask, s.depth, kIntr, cfg);
  REQUIRE(meas.has_value());

  FlowMeasurement reversed = *meas;
  const int n = meas->pixel_count;
  for (int i = 0; i < n; ++i) {
    reversed.flow.segment<2>(2 * i) = meas->flow.segment<2>(2 * (n - 1 - i));
    reversed.jacobian.middleRows<2>(2 * i) = meas->jacobian.middleRows<2>(2 * (n - 1 - i));
  }
  TwistBelief prior;
  prior.covariance = 10.0 * Mat6::Identity();
  const TwistBelief a = update(prior, *meas, cfg);
  const TwistBelief b = update(prior, reversed, cfg);
  CHECK((a.mean.vector() - b.mean.vector()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate systems raise a numerical error") {
  TwistFilterConfig cfg = test_config();
  FlowMeasurement meas;
  meas.pixel_count = 1;
  meas.flow = Eigen::VectorXd::Zero(2);
  meas.jacobian = Eigen::MatrixXd::Zero(2, 6);
  SUBCASE("indefinite prior covariance") {
    TwistBelief prior;
    prior.covariance = -Mat6::Identity();
    CHECK_THROWS_AS(update(prior, meas, cfg), NumericalError);
  }
  SUBCASE("zero-variance prior direction with no measurement information") {
    TwistBelief prior;
    prior.covariance = Mat6::Identity();
    prior.covariance(5, 5) = 0.0;  // singular prior, zero jacobian
    CHECK_THROWS_AS(update(prior, meas, cfg), NumericalError);
  }
}

TEST_CASE("covariance stays symmetric positive definite over many random steps") {
  std::mt19937_64 rng(43);
  TwistFilterConfig cfg = test_config();
  TwistBelief b;
  b.covariance = Mat6::Identity();
  std::uniform_real_distribution<double> upix(20.0, 620.0), vpix(20.0, 460.0),
      depth(0.4, 2.5);
  for (int step_idx = 0; step_idx < 10000; ++step_idx) {
    b = predict(b, cfg);
    FlowMeasurement meas;
    const int n = 4;
    meas.pixel_count = n;
    meas.flow.resize(2 * n);
    meas.jacobian.resize(2 * n, 6);
    for (int i = 0; i < n; ++i) {
      meas.jacobian.middleRows<2>(2 * i) =
          flow_jacobian_row(upix(rng), vpix(rng), depth(rng), kIntr, cfg.dt);
      meas.flow(2 * i) = random_vector(rng, 2.0).x();
      meas.flow(2 * i + 1) = random_vector(rng, 2.0).y();
    }
    b = update(b, meas, cfg);
    const double asym = (b.covariance - b.covariance.transpose()).cwiseAbs().maxCoeff();
    REQUIRE(asym < 1e-12);
    if (step_idx % 500 == 0) {
      Eigen::SelfAdjointEigenSolver<Mat6> es(b.covariance);
      REQUIRE(es.eigenvalues().minCoeff() > 0.0);
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat6> es(b.covariance);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("pure translation recovers negligible angular velocity") {
  CorruptionSpec clean;
  auto bundle = generate(drift_trajectory(Vec3(0.12, -0.06, 0.03), Vec3(-0.1, 0, 0.9)),
                         clean, TriangleMesh::box(0.10, 0.16, 0.21),
                         flowtrack::testing::test_intrinsics(), 30.0, 40, 2);
  TwistFilterConfig cfg = test_config();
  TwistBelief b;
  b.covariance = 10.0 * Mat6::Identity();
  Twist last;
  for (std::size_t k = 1; k < bundle.frames.size(); ++k) {
    const auto res = step(b, bundle.frames[k].flow, bundle.frames[k - 1].gt_mask,
                          bundle.frames[k - 1].depth, kIntr, cfg);
    b = res.belief;
    last = res.measured;
  }
  CHECK(last.omega.norm() < 0.05);
  CHECK((last.v_o - Vec3(0.12, -0.06, 0.03)).norm() < 0.01);
}

TEST_CASE("pure optical-axis rotation recovers negligible linear velocity") {
  CorruptionSpec clean;
  auto bundle = generate(spin_trajectory(Vec3(0, 0, 0.6), Vec3(0, 0, 0.8)), clean,
                         TriangleMesh::box(0.10, 0.16, 0.21),
                         flowtrack::testing::test_intrinsics(), 30.0, 40, 3);
  TwistFilterConfig cfg = test_config();
  TwistBelief b;
  b.covariance = 10.0 * Mat6::Identity();
  Twist last;
  for (std::size_t k = 1; k < bundle.frames.size(); ++k) {
    const auto res = step(b, bundle.frames[k].flow, bundle.frames[k - 1].gt_mask,
                          bundle.frames[k - 1].depth, kIntr, cfg);
    b = res.belief;
    last = res.measured;
  }
  CHECK(last.v_o.norm() < 0.01);
  CHECK((last.omega - Vec3(0, 0, 0.6)).norm() < 0.02);
}

TEST_CASE("steady-state error grows monotonically with flow noise") {
  const auto run_with_noise = [&](double sigma, std::uint64_t seed) {
    CorruptionSpec corr;
    corr.flow_noise = sigma;
    auto bundle = flowtrack::testing::velocity_scene(60, seed, corr);
    TwistFilterConfig cfg = test_config();
    cfg.sigma_flow = std::max(sigma, 0.5);
    TwistBelief b;
    b.covariance = 10.0 * Mat6::Identity();
    double err = 0.0;
    int n = 0;
    for (std::size_t k = 1; k < bundle.frames.size(); ++k) {
      const auto res = step(b, bundle.frames[k].flow, bundle.frames[k - 1].gt_mask,
                            bundle.frames[k - 1].depth, kIntr, cfg);
      b = res.belief;
      if (k >= 20) {
        err += (res.measured.vector() - bundle.frames[k].twist.vector()).norm();
        ++n;
      }
    }
    return err / n;
  };
  const double e05 = run_with_noise(0.5, 11);
  const double e10 = run_with_noise(1.0, 11);
  const double e20 = run_with_noise(2.0, 11);
  CHECK(e05 < e10);
  CHECK(e10 < e20);
}

TEST_CASE("step without usable pixels is predict-only and deterministic") {
  const TwistFilterConfig cfg = test_config();
  Mask empty_mask(640, 480);
  DepthMap depth(640, 480);
  FlowField flow(640, 480);
  TwistBelief b;
  const auto res = step(b, flow, empty_mask, depth, kIntr, cfg);
  CHECK_FALSE(res.updated);
  CHECK((res.belief.covariance - predict(b, cfg).covariance).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0));

  const SynthScene s = synth_scene(Twist{Vec3(0.1, 0, 0), Vec3::Zero()}, spread_pixels(),
                                   1.0, cfg.dt);
  const auto r1 = step(b, s.flow, s.mask, s.depth, kIntr, cfg);
  const auto r2 = step(b, s.flow, s.mask, s.depth, kIntr, cfg);
  CHECK((r1.belief.mean.vector() - r2.belief.mean.vector()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r1.belief.covariance - r2.belief.covariance).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
