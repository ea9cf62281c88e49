#include <doctest.h>

#include <random>

#include "flowtrack/flow_sync.hpp"
#include "support/scenes.hpp"

using namespace flowtrack;

namespace {

Mask square_mask(int w, int h, int u0, int v0, int size) {
  Mask m(w, h);
  for (int v = v0; v < v0 + size; ++v)
    for (int u = u0; u < u0 + size; ++u) m.insert(u, v);
  return m;
}

FlowField uniform_flow(int w, int h, float du, float dv) {
  FlowField f(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) f.set(u, v, du, dv);
  return f;
}

}  // namespace

TEST_SUITE("flow_sync") {

TEST_CASE("zero flow leaves the mask unchanged") {
  const Mask m = square_mask(64, 48, 10, 12, 8);
  const Mask out = propagate_mask(m, FlowField(64, 48));
  CHECK(mask_iou(m, out) == doctest::Approx(1.0));
}

TEST_CASE("uniform flow translates the mask") {
  const Mask m = square_mask(640, 480, 100, 100, 10);
  const Mask out = propagate_mask(m, uniform_flow(640, 480, 2.0f, 0.0f));
  CHECK(out.size() == m.size());
  CHECK(mask_iou(out, square_mask(640, 480, 102, 100, 10)) == doctest::Approx(1.0));
}

TEST_CASE("pixels pushed past the border are dropped") {
  Mask m(64, 48);
  m.insert(63, 20);
  const Mask out = propagate_mask(m, uniform_flow(64, 48, 1.0f, 0.0f));
  CHECK(out.empty());
}

TEST_CASE("rounding is half-up (ties toward +inf)") {
  Mask m(64, 48);
  m.insert(10, 10);
  Mask out = propagate_mask(m, uniform_flow(64, 48, 0.5f, -0.5f));
  CHECK(out.contains(11, 10));  // +0.5 rounds up, -0.5 rounds toward zero here
  CHECK(out.size() == 1);
}

TEST_CASE("dimension mismatch is rejected") {
  const Mask m = square_mask(64, 48, 0, 0, 4);
  CHECK_THROWS_AS(propagate_mask(m, FlowField(32, 48)), std::invalid_argument);
}

TEST_CASE("cardinality never grows under propagation") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<float> flow(-6.0f, 6.0f);
  std::uniform_int_distribution<int> coord(0, 63);
  for (int trial = 0; trial < 50; ++trial) {
    Mask m(64, 64);
    for (int i = 0; i < 200; ++i) m.insert(coord(rng), coord(rng));
    FlowField f(64, 64);
    for (auto& x : f.data) x = flow(rng);
    const Mask out = propagate_mask(m, f);
    CHECK(out.size() <= m.size());
  }
}

TEST_CASE("advance requires contiguous frames and fills the buffer") {
  MaskSynchronizer sync(3, 0);
  sync.catch_up(square_mask(64, 48, 10, 10, 8), 0);
  const FlowField zero(64, 48);
  sync.advance(zero, 1);
  CHECK_THROWS_AS(sync.advance(zero, 3), std::invalid_argument);
  sync.advance(zero, 2);
  CHECK(sync.current_frame() == 2);
  CHECK(mask_iou(sync.current_mask(), square_mask(64, 48, 10, 10, 8)) ==
        doctest::Approx(1.0));
}

TEST_CASE("stationary bootstrap then zero flow keeps the first mask") {
  MaskSynchronizer sync(6, 0);
  const Mask m0 = square_mask(64, 48, 20, 14, 6);
  sync.catch_up(m0, 0);
  for (int k = 1; k <= 10; ++k) sync.advance(FlowField(64, 48), k);
  CHECK(mask_iou(sync.current_mask(), m0) == doctest::Approx(1.0));
}

TEST_CASE("constant flow composes over advances") {
  MaskSynchronizer sync(6, 0);
  sync.catch_up(square_mask(640, 480, 100, 100, 10), 0);
  for (int k = 1; k <= 6; ++k) sync.advance(uniform_flow(640, 480, 1.0f, 0.0f), k);
  CHECK(mask_iou(sync.current_mask(), square_mask(640, 480, 106, 100, 10)) ==
        doctest::Approx(1.0));
}

TEST_CASE("catch_up over zero flows returns the delayed mask") {
  MaskSynchronizer sync(3, 0);
  sync.catch_up(square_mask(64, 48, 5, 5, 4), 0);
  for (int k = 1; k <= 3; ++k) sync.advance(FlowField(64, 48), k);
  const Mask m_d = square_mask(64, 48, 30, 20, 5);
  sync.catch_up(m_d, 0);
  CHECK(mask_iou(sync.current_mask(), m_d) == doctest::Approx(1.0));
}

TEST_CASE("catch_up composes the buffered flows: three steps of (2,0)") {
  MaskSynchronizer sync(3, 0);
  sync.catch_up(square_mask(640, 480, 50, 60, 10), 0);
  const FlowField f = uniform_flow(640, 480, 2.0f, 0.0f);
  for (int k = 1; k <= 3; ++k) sync.advance(f, k);
  const Mask m_d = square_mask(640, 480, 100, 100, 10);
  const Mask synced = sync.catch_up(m_d, 0);
  CHECK(mask_iou(synced, square_mask(640, 480, 106, 100, 10)) == doctest::Approx(1.0));

  // definitional equivalence: the same fold by explicit propagate_mask calls
  Mask manual = m_d;
  for (int i = 0; i < 3; ++i) manual = propagate_mask(manual, f);
  CHECK(mask_iou(synced, manual) == doctest::Approx(1.0));
}

TEST_CASE("catch_up names the missing buffered frame") {
  MaskSynchronizer sync(2, 0, 2);
  sync.catch_up(square_mask(64, 48, 5, 5, 4), 0);
  for (int k = 1; k <= 5; ++k) sync.advance(FlowField(64, 48), k);
  // capacity 2 keeps only frames 4..5; origin 1 needs flows 2..5
  try {
    sync.catch_up(square_mask(64, 48, 5, 5, 4), 1);
    FAIL("expected missing-flow error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("frame 2") != std::string::npos);
  }
}

TEST_CASE("provenance gap wins over the configured delay") {
  // configured N_s = 6, but the delayed mask declares a 2-frame origin gap
  MaskSynchronizer sync(6, 0);
  sync.catch_up(square_mask(640, 480, 100, 100, 10), 0);
  const FlowField f = uniform_flow(640, 480, 3.0f, 0.0f);
  for (int k = 1; k <= 4; ++k) sync.advance(f, k);
  sync.catch_up(square_mask(640, 480, 100, 100, 10), 2);  // two flows to replay
  CHECK(mask_iou(sync.current_mask(), square_mask(640, 480, 106, 100, 10)) ==
        doctest::Approx(1.0));
}

TEST_CASE("order consistency on simulator flow: arrival order equals definition") {
  auto bundle = flowtrack::testing::mask_scene(20, 5);
  MaskSynchronizer sync(6, 0);
  std::vector<FlowField> flows;
  for (const auto& f : bundle.frames) flows.push_back(f.flow);

  for (const auto& f : bundle.frames) {
    if (f.frame > 0) sync.advance(f.flow, f.frame);
    for (const auto& ev : f.mask_events) sync.catch_up(ev.mask, ev.origin);
  }

  // definition: fold the last delayed mask through every flow after its origin
  const auto& last_event = [&]() -> const MaskEvent& {
    for (auto it = bundle.frames.rbegin(); it != bundle.frames.rend(); ++it) {
      if (!it->mask_events.empty()) return it->mask_events.back();
    }
    FAIL("no mask events in bundle");
    return bundle.frames.front().mask_events.front();
  }();
  Mask manual = last_event.mask;
  for (std::int64_t k = last_event.origin + 1; k < static_cast<std::int64_t>(bundle.frames.size()); ++k) {
    manual = propagate_mask(manual, flows[static_cast<std::size_t>(k)]);
  }
  CHECK(mask_iou(sync.current_mask(), manual) == doctest::Approx(1.0));
}

TEST_CASE("synchronized masks stay close to ground truth on the plate scene") {
  auto bundle = flowtrack::testing::mask_scene(60, 1);
  MaskSynchronizer sync(6, 0);
  double min_iou = 1.0;
  for (const auto& f : bundle.frames) {
    if (f.frame > 0) sync.advance(f.flow, f.frame);
    for (const auto& ev : f.mask_events) sync.catch_up(ev.mask, ev.origin);
    min_iou = std::min(min_iou, mask_iou(sync.current_mask(), f.gt_mask));
  }
  CHECK(min_iou >= 0.90);
}

}  // TEST_SUITE
