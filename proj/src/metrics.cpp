#include "avishape/metrics.hpp"

namespace avishape {

double pck(const Points2& predicted, const Points2& ground_truth, const std::vector<bool>& visible,
           const BoundingBox& bbox, double threshold_fraction) {
  if (predicted.rows() != ground_truth.rows() || static_cast<Eigen::Index>(visible.size()) != ground_truth.rows()) {
    throw InvalidInput("pck: keypoint counts differ");
  }
  if (!(bbox.size() > 0.0)) throw InvalidInput("pck: bounding box has zero size");
  const double thr = threshold_fraction * bbox.size();
  int total = 0, hit = 0;
  for (Eigen::Index k = 0; k < ground_truth.rows(); ++k) {
    if (!visible[k]) continue;
    ++total;
    if ((predicted.row(k) - ground_truth.row(k)).norm() <= thr) ++hit;
  }
  if (total == 0) throw InvalidInput("pck: no visible ground-truth keypoints");
  return static_cast<double>(hit) / total;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("iou: mask sizes differ");
  long inter = 0, uni = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const bool x = a.data()[i] != 0, y = b.data()[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace avishape
