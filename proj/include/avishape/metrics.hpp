#pragma once

#include "avishape/annotation.hpp"
#include "avishape/types.hpp"

#include <vector>

namespace avishape {

/// Fraction of visible ground-truth keypoints whose prediction lies within
/// threshold_fraction * max(bbox w, h) (inclusive).
double pck(const Points2& predicted, const Points2& ground_truth, const std::vector<bool>& visible,
           const BoundingBox& bbox, double threshold_fraction = 0.05);

/// |A and B| / |A or B|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace avishape
