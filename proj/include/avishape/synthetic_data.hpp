#pragma once

#include "avishape/annotation.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/template_model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace avishape {

/// Named smooth, mirror-symmetric displacement fields on the template:
/// "inflate-belly", "elongate-tail", "crest", "slim", "inflate-body".
/// The largest vertex displacement equals magnitude * body length.
Eigen::VectorXd recipe_displacement(const TemplateModel& tmpl, const std::string& recipe, double magnitude);
const std::vector<std::string>& recipe_names();

struct RecipeTerm {
  std::string recipe;
  double magnitude = 0.0;
};

/// Generation recipe for one synthetic species.
struct SyntheticSpeciesSpec {
  std::string species = "species";
  std::uint64_t seed = 1;
  /// Ground-truth species offset dv* as a sum of recipes.
  std::vector<RecipeTerm> mean_recipes;
  /// Individual variation directions; beta* ~ N(0, 1) per direction.
  std::vector<std::string> variation_recipes;
  double variation_magnitude = 0.0;
  int instances = 20;
  double pose_scale = 1.0;
  double keypoint_noise_px = 0.0;
  /// Per instance, the mask is dilated or eroded (random sign) by this radius.
  int mask_noise_px = 0;
  int image_size = 64;
  /// Random image-plane shift of the bird, as a fraction of the image size.
  double position_jitter = 0.05;

  void validate() const;
};

struct SyntheticGroundTruth {
  Eigen::VectorXd dv;              // 3N
  Eigen::MatrixXd basis;           // 3N x K*
  Eigen::MatrixXd betas;           // instances x K*
  std::vector<PoseParams> poses;
  std::vector<Points2> true_keypoints;  // before noise
  std::vector<BinaryMask> true_masks;   // before noise
};

struct SyntheticCollection {
  Camera camera;
  std::vector<AnnotatedInstance> instances;
  SyntheticGroundTruth truth;
};

/// Renders annotated instances of a synthetic species. Keypoints hidden by
/// the surface (depth more than 1% of body length behind the first hit) or
/// outside the image are marked invisible. Deterministic in spec.seed.
SyntheticCollection generate_synthetic_collection(const TemplateModel& tmpl, const PosePrior& prior,
                                                  const SyntheticSpeciesSpec& spec);

/// Exact annotation of one posed shape (no noise).
AnnotatedInstance render_annotation(const TemplateModel& tmpl, const Camera& camera, const PoseParams& params,
                                    const Points3& rest_shape, const std::string& id, const std::string& species);

/// Binary dilation (radius > 0) or erosion (radius < 0) with a disc.
BinaryMask morph_disc(const BinaryMask& mask, int radius);

}  // namespace avishape
