#pragma once

#include "avishape/prior.hpp"
#include "avishape/template_model.hpp"

namespace avishape {

/// Procedural articulated bird used when no template asset is supplied.
///
/// Model frame: x lateral (left wing at +x), y points down (belly side),
/// z points forward (beak). 13 joints:
///   root, spine, neck, head, beak, tail1, tail2,
///   leg_l, foot_l, leg_r, foot_r, wing_l, wing_r.
/// 18 keypoints, beak-tip to tail-tip length close to 1.
///
/// The mesh is a union of closed lofted tubes (body, neck, head, beak,
/// tail, legs, feet, wings), each exactly mirror-symmetric across x = 0.
struct SyntheticTemplateOptions {
  /// Multiplies ring and segment counts. 1 gives roughly 340 vertices,
  /// 2 roughly 1300.
  double resolution = 1.0;
};

TemplateData make_synthetic_bird_data(const SyntheticTemplateOptions& options = {});
TemplateModel make_synthetic_bird(const SyntheticTemplateOptions& options = {});

/// Pose prior for the synthetic bird. The root rotation mean turns the
/// bird side-on to a camera looking down +z.
PosePrior make_synthetic_bird_prior(const TemplateModel& tmpl);

}  // namespace avishape
