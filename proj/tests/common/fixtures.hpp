#pragma once

#include "avishape/annotation.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/synthetic_template.hpp"

#include <Eigen/Core>

#include <random>

namespace fixture {

using namespace avishape;

inline const TemplateModel& small_bird() {
  static const TemplateModel t = make_synthetic_bird({0.6});
  return t;
}

inline const TemplateModel& bird() {
  static const TemplateModel t = make_synthetic_bird();
  return t;
}

// Prior-mean pose with gamma chosen so the rest shape's posed centroid sits
// on the optical axis at `depth`.
inline PoseParams centered_pose(const TemplateModel& tmpl, const PosePrior& prior, const Points3& rest,
                                double depth = 3.0) {
  PoseParams p = PoseParams::neutral(tmpl.num_joints());
  p.theta = prior.theta_mean();
  p.alpha = prior.alpha_mean();
  const Points3 posed = pose_mesh(tmpl, p, rest).vertices;
  p.gamma = -posed.colwise().mean().transpose() + Eigen::Vector3d(0, 0, depth);
  return p;
}

inline PoseParams jittered(PoseParams p, std::mt19937_64& rng, double rot = 0.15, double scale = 0.05) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] += rot * n(rng);
  for (Eigen::Index i = 0; i < p.alpha.size(); ++i) p.alpha[i] *= 1.0 + scale * n(rng);
  p.kappa[0] *= 1.0 + scale * n(rng);
  p.kappa[1] *= 1.0 + scale * n(rng);
  p.gamma += Eigen::Vector3d(0.05 * n(rng), 0.05 * n(rng), 0.1 * n(rng));
  return p;
}

// Exact annotation of a posed mesh: all keypoints visible, hard mask.
inline AnnotatedInstance annotate(const TemplateModel& tmpl, const Camera& cam, const PoseParams& p,
                                  const Points3& rest) {
  const PosedMesh m = pose_mesh(tmpl, p, rest);
  AnnotatedInstance inst;
  inst.id = "fixture";
  inst.species = "fixture";
  inst.keypoints = project(cam, keypoint_positions(tmpl, m.vertices));
  inst.visible.assign(tmpl.num_keypoints(), true);
  inst.mask = rasterize_hard(m, cam);
  inst.bbox = mask_bbox(inst.mask);
  return inst;
}

}  // namespace fixture
