#include "flowtrack/image.hpp"

#include <stdexcept>

namespace flowtrack {

double mask_iou(const Mask& a, const Mask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw std::invalid_argument("mask_iou: dimension mismatch");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  const auto& ba = a.bitmap();
  const auto& bb = b.bitmap();
  for (std::size_t i = 0; i < ba.size(); ++i) {
    const bool ia = ba[i] != 0;
    const bool ib = bb[i] != 0;
    inter += (ia && ib);
    uni += (ia || ib);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace flowtrack
