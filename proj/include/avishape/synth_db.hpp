#pragma once

#include "avishape/annotation.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/template_model.hpp"

#include <cstdint>
#include <vector>

namespace avishape {

/// Keypoint/parameter pairs from animating the template with its pose prior.
/// Keypoints are stored relative to the silhouette box: (kp - center) / size.
struct SynthDb {
  Camera camera;
  double depth = 0.0;
  std::vector<Points2> keypoints;
  std::vector<BoundingBox> boxes;
  std::vector<PoseParams> params;

  int size() const { return static_cast<int>(params.size()); }
};

/// Depth at which the rest template's body length spans 75% of the image width.
double canonical_depth(const TemplateModel& tmpl, const Camera& camera);

/// Root translation that puts the centroid of the posed rest shape on the
/// optical axis at `depth`.
Eigen::Vector3d centering_translation(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest,
                                      double depth);

/// Samples n poses (theta, alpha from the prior; kappa 1; gamma centering the
/// bird at the canonical depth). Samples with a vertex behind the camera are
/// redrawn, up to 100 times each. Deterministic in seed.
SynthDb build_synth_db(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera, int n,
                       std::uint64_t seed);

/// Box-relative keypoints.
Points2 normalize_keypoints(const Points2& keypoints, const BoundingBox& box);

/// Nearest database entry under the mean distance over visible normalized
/// keypoints, with gamma moved so that the entry's silhouette box maps onto
/// the query box. Needs at least 4 visible keypoints.
PoseParams init_pose(const Points2& keypoints, const std::vector<bool>& visible, const BoundingBox& box,
                     const SynthDb& db);

}  // namespace avishape
