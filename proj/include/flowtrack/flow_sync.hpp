#pragma once

#include <cstdint>
#include <deque>
#include <utility>

#include "flowtrack/image.hpp"

namespace flowtrack {

/// Ring buffer of the most recent flow fields keyed by frame index. Frame
/// indices must arrive strictly contiguous; the oldest entry is evicted once
/// capacity is reached.
class FlowBuffer {
 public:
  explicit FlowBuffer(std::size_t capacity);

  void push(std::int64_t frame, FlowField flow);
  /// Returns nullptr when the frame is no longer (or not yet) buffered.
  const FlowField* find(std::int64_t frame) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  std::int64_t newest_frame() const { return entries_.back().first; }
  std::int64_t oldest_frame() const { return entries_.front().first; }

 private:
  std::size_t capacity_;
  std::deque<std::pair<std::int64_t, FlowField>> entries_;
};

/// Propagates every mask pixel by its flow vector, rounding to the nearest
/// integer pixel (ties toward +inf). Out-of-bounds targets are dropped and
/// colliding targets merge, so the result never has more pixels than the
/// input. Throws std::invalid_argument on dimension mismatch.
Mask propagate_mask(const Mask& m, const FlowField& f);

/// Produces a mask stream synchronized with the frame clock from delayed,
/// low-rate masks by propagating with per-frame optical flow and catching up
/// with buffered flows when a delayed mask arrives.
class MaskSynchronizer {
 public:
  /// delay_frames is the nominal mask delay N_s; the flow buffer holds
  /// buffer_capacity frames (defaults to delay_frames + 2).
  MaskSynchronizer(int delay_frames, std::int64_t start_frame = 0,
                   std::size_t buffer_capacity = 0);

  bool initialized() const { return initialized_; }
  std::int64_t current_frame() const { return frame_; }
  const Mask& current_mask() const { return mask_; }
  int delay_frames() const { return delay_; }

  /// Advances the clock to `frame` (must be current_frame() + 1): propagates
  /// the current mask by f and appends f to the flow buffer. Returns the new
  /// synchronized mask (empty until the first delayed mask arrives).
  const Mask& advance(const FlowField& f, std::int64_t frame);

  /// Handles a delayed mask whose provenance says it was computed on
  /// origin_frame. The actual frame gap from the provenance tag wins over the
  /// configured delay. Replays the buffered flows (origin_frame,
  /// current_frame] over m_d; throws std::runtime_error naming the first
  /// missing buffered frame. The first mask ever received is adopted as the
  /// current mask directly (object assumed stationary since origin_frame).
  const Mask& catch_up(const Mask& m_d, std::int64_t origin_frame);

 private:
  int delay_;
  FlowBuffer flows_;
  Mask mask_;
  std::int64_t frame_;
  bool initialized_ = false;
};

}  // namespace flowtrack
