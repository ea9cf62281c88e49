#include "flowtrack/flow_sync.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flowtrack {

FlowBuffer::FlowBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw std::invalid_argument("FlowBuffer: capacity must be positive");
  }
}

void FlowBuffer::push(std::int64_t frame, FlowField flow) {
  if (!entries_.empty() && frame != entries_.back().first + 1) {
    throw std::invalid_argument("FlowBuffer: non-contiguous frame index " +
                                std::to_string(frame) + " after " +
                                std::to_string(entries_.back().first));
  }
  entries_.emplace_back(frame, std::move(flow));
  if (entries_.size() > capacity_) {
    entries_.pop_front();
  }
}

const FlowField* FlowBuffer::find(std::int64_t frame) const {
  if (entries_.empty() || frame < entries_.front().first || frame > entries_.back().first) {
    return nullptr;
  }
  return &entries_[static_cast<std::size_t>(frame - entries_.front().first)].second;
}

Mask propagate_mask(const Mask& m, const FlowField& f) {
  if (m.width() != f.width || m.height() != f.height) {
    throw std::invalid_argument("propagate_mask: mask/flow dimension mismatch");
  }
  Mask out(m.width(), m.height());
  const auto& bits = m.bitmap();
  for (int v = 0; v < m.height(); ++v) {
    const std::size_t row = static_cast<std::size_t>(v) * m.width();
    for (int u = 0; u < m.width(); ++u) {
      if (!bits[row + u]) continue;
      const Eigen::Vector2f d = f.at(u, v);
      // round to nearest, ties toward +inf
      const int nu = static_cast<int>(std::floor(u + d.x() + 0.5f));
      const int nv = static_cast<int>(std::floor(v + d.y() + 0.5f));
      out.insert(nu, nv);  // silently drops out-of-bounds targets
    }
  }
  return out;
}

MaskSynchronizer::MaskSynchronizer(int delay_frames, std::int64_t start_frame,
                                   std::size_t buffer_capacity)
    : delay_(delay_frames),
      flows_(buffer_capacity != 0 ? buffer_capacity
                                  : static_cast<std::size_t>(delay_frames) + 2),
      frame_(start_frame) {
  if (delay_frames < 0) {
    throw std::invalid_argument("MaskSynchronizer: delay must be non-negative");
  }
}

const Mask& MaskSynchronizer::advance(const FlowField& f, std::int64_t frame) {
  if (frame != frame_ + 1) {
    throw std::invalid_argument("MaskSynchronizer::advance: expected frame " +
                                std::to_string(frame_ + 1) + ", got " +
                                std::to_string(frame));
  }
  if (initialized_) {
    mask_ = propagate_mask(mask_, f);
  }
  flows_.push(frame, f);
  frame_ = frame;
  return mask_;
}

const Mask& MaskSynchronizer::catch_up(const Mask& m_d, std::int64_t origin_frame) {
  if (origin_frame > frame_) {
    throw std::runtime_error("MaskSynchronizer::catch_up: origin frame " +
                             std::to_string(origin_frame) + " is in the future");
  }
  if (!initialized_) {
    // Stationary-assumption bootstrap: the first mask is adopted as-is.
    mask_ = m_d;
    initialized_ = true;
    return mask_;
  }
  Mask m = m_d;
  for (std::int64_t k = origin_frame + 1; k <= frame_; ++k) {
    const FlowField* f = flows_.find(k);
    if (f == nullptr) {
      throw std::runtime_error("MaskSynchronizer::catch_up: missing buffered flow for frame " +
                               std::to_string(k));
    }
    m = propagate_mask(m, *f);
  }
  mask_ = std::move(m);
  return mask_;
}

}  // namespace flowtrack
