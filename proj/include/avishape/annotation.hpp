#pragma once

#include "avishape/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace avishape {

struct BoundingBox {
  double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

  double size() const { return std::max(w, h); }
  double diagonal() const { return std::hypot(w, h); }
  Eigen::Vector2d center() const { return {x + 0.5 * w, y + 0.5 * h}; }
  bool operator==(const BoundingBox&) const = default;
};

/// One annotated image: 2D keypoints with visibility, silhouette and box.
struct AnnotatedInstance {
  std::string id;
  std::string species;
  Points2 keypoints;              // K x 2, pixels
  std::vector<bool> visible;      // K
  BinaryMask mask;                // H x W, 0/1
  BoundingBox bbox;

  int num_visible() const;
  /// Checks the box, visible-keypoint bounds and mask size.
  void validate(int width, int height) const;
};

/// Tight box around the set pixels of a mask (pixel-edge coordinates).
BoundingBox mask_bbox(const BinaryMask& mask);

}  // namespace avishape
