#include "avishape/annotation.hpp"

#include <string>

namespace avishape {

int AnnotatedInstance::num_visible() const {
  int n = 0;
  for (bool v : visible) n += v ? 1 : 0;
  return n;
}

void AnnotatedInstance::validate(int width, int height) const {
  const std::string who = "instance '" + id + "': ";
  if (keypoints.rows() != static_cast<Eigen::Index>(visible.size())) {
    throw InvalidInput(who + "keypoint and visibility counts differ");
  }
  if (!(bbox.w > 0.0) || !(bbox.h > 0.0)) throw InvalidInput(who + "bounding box is empty");
  if (mask.rows() != height || mask.cols() != width) throw InvalidInput(who + "mask size differs from image size");
  for (Eigen::Index k = 0; k < keypoints.rows(); ++k) {
    if (!visible[k]) continue;
    const double u = keypoints(k, 0), v = keypoints(k, 1);
    if (!(u >= 0.0 && u <= width && v >= 0.0 && v <= height)) {
      throw InvalidInput(who + "visible keypoint " + std::to_string(k) + " lies outside the image");
    }
  }
}

BoundingBox mask_bbox(const BinaryMask& mask) {
  int x0 = static_cast<int>(mask.cols()), y0 = static_cast<int>(mask.rows()), x1 = -1, y1 = -1;
  for (Eigen::Index y = 0; y < mask.rows(); ++y) {
    for (Eigen::Index x = 0; x < mask.cols(); ++x) {
      if (!mask(y, x)) continue;
      x0 = std::min(x0, static_cast<int>(x));
      x1 = std::max(x1, static_cast<int>(x));
      y0 = std::min(y0, static_cast<int>(y));
      y1 = std::max(y1, static_cast<int>(y));
    }
  }
  if (x1 < 0) return {};
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0 + 1),
          static_cast<double>(y1 - y0 + 1)};
}

}  // namespace avishape
