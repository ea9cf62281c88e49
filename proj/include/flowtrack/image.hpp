#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace flowtrack {

/// Dense 2-vector field in pixels/frame, row-major. F_k(u, v) is the
/// displacement of the pixel (u, v) of frame k-1 toward frame k.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 2 floats per pixel: (du, dv)

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 2, 0.0f) {}

  Eigen::Vector2f at(int u, int v) const {
    const size_t i = (static_cast<size_t>(v) * width + u) * 2;
    return {data[i], data[i + 1]};
  }
  void set(int u, int v, float du, float dv) {
    const size_t i = (static_cast<size_t>(v) * width + u) * 2;
    data[i] = du;
    data[i + 1] = dv;
  }
  bool empty() const { return data.empty(); }
};

/// Dense depth in meters, row-major. Zero or non-finite entries are invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h, 0.0f) {}

  static bool is_valid(float d) { return std::isfinite(d) && d > 0.0f; }

  float at(int u, int v) const { return data[static_cast<size_t>(v) * width + u]; }
  void set(int u, int v, float d) { data[static_cast<size_t>(v) * width + u] = d; }
  bool valid_at(int u, int v) const { return is_valid(at(u, v)); }
  bool empty() const { return data.empty(); }
};

/// Set of integer pixel coordinates stored as a bitmap; the coordinate-list
/// view is derived from the bitmap in row-major order so the two views always
/// agree and the list carries no duplicates.
class Mask {
 public:
  Mask() = default;
  Mask(int w, int h)
      : width_(w), height_(h), bits_(static_cast<size_t>(w) * h, 0), count_(0) {}

  int width() const { return width_; }
  int height() const { return height_; }

  bool contains(int u, int v) const {
    if (u < 0 || u >= width_ || v < 0 || v >= height_) return false;
    return bits_[static_cast<size_t>(v) * width_ + u] != 0;
  }

  /// Inserts a pixel; out-of-bounds coordinates are rejected (returns false).
  bool insert(int u, int v) {
    if (u < 0 || u >= width_ || v < 0 || v >= height_) return false;
    std::uint8_t& b = bits_[static_cast<size_t>(v) * width_ + u];
    if (b == 0) {
      b = 1;
      ++count_;
    }
    return true;
  }

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// Row-major coordinate list (u, v).
  std::vector<std::array<int, 2>> pixels() const {
    std::vector<std::array<int, 2>> out;
    out.reserve(count_);
    for (int v = 0; v < height_; ++v) {
      for (int u = 0; u < width_; ++u) {
        if (bits_[static_cast<size_t>(v) * width_ + u]) out.push_back({u, v});
      }
    }
    return out;
  }

  const std::vector<std::uint8_t>& bitmap() const { return bits_; }
  std::vector<std::uint8_t>& bitmap() { return bits_; }

  /// Recomputes the pixel count after direct bitmap edits.
  void recount() {
    count_ = 0;
    for (auto b : bits_) count_ += (b != 0);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

/// Intersection-over-union of two same-size masks; 1.0 when both are empty.
double mask_iou(const Mask& a, const Mask& b);

}  // namespace flowtrack
