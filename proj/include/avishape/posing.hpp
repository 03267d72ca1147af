#pragma once

#include "avishape/template_model.hpp"
#include "avishape/types.hpp"

#include <Eigen/Core>

#include <array>
#include <vector>

namespace avishape {

/// Articulation state of one instance.
struct PoseParams {
  Eigen::VectorXd theta;  // 3J axis-angle, joint-local
  Eigen::VectorXd alpha;  // J bone-length scales
  Eigen::Vector3d gamma = Eigen::Vector3d::Zero();
  Eigen::Vector2d kappa = Eigen::Vector2d::Ones();  // beak, tail

  static PoseParams neutral(int num_joints);
  void validate(int num_joints) const;
  bool operator==(const PoseParams& o) const;
};

/// Species mean offset and blend-shape basis. basis has 3N rows, K columns.
struct ShapeState {
  Eigen::VectorXd dv;
  Eigen::MatrixXd basis;

  static ShapeState zero(int num_vertices, int k = 0);
  int num_basis() const { return static_cast<int>(basis.cols()); }
};

/// v_bird + dv + V * beta.
Points3 apply_shape(const TemplateModel& tmpl, const ShapeState& shape, const Eigen::VectorXd& beta);

/// Length scaling of a vertex group about a fixed anchor point.
struct PartScaling {
  std::vector<int> vertices;
  Eigen::Vector3d anchor;
  Eigen::Vector3d axis;  // unit
};

PartScaling part_scaling(const TemplateModel& tmpl, const std::string& group);

/// Scales the group's vertices by `scale` along the axis through the anchor.
Points3 scale_part(const Points3& vertices, const PartScaling& part, double scale);

/// Rotation matrix of an axis-angle vector and, optionally, its partial
/// derivatives with respect to the three components.
struct AxisAngleRotation {
  Eigen::Matrix3d R;
  std::array<Eigen::Matrix3d, 3> dR;
};
AxisAngleRotation axis_angle_rotation(const Eigen::Vector3d& w, bool with_derivatives = false);

/// Maps an axis-angle vector to the equivalent one with magnitude <= pi.
Eigen::Vector3d wrap_axis_angle(const Eigen::Vector3d& w);

/// Intermediate quantities of the posing function, kept for the adjoint pass.
struct PoseCache {
  Points3 input;
  Points3 after_beak;
  Points3 rest;           // after both part scalings
  Points3 joints_rest;    // re-derived from `rest`
  Points3 joints_scaled;  // after bone-length scaling
  std::vector<AxisAngleRotation> local;
  std::vector<Eigen::Matrix3d> world_rot;
  Points3 world_trans;  // posed joint positions before gamma
  Points3 posed;
};

/// Full posing function: part scaling, joint re-derivation, bone scaling,
/// forward kinematics, linear blend skinning, root translation.
/// `rest_shape` is v_bird + dv + V beta.
PoseCache pose_forward(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest_shape,
                       bool with_derivatives = true);

struct PosedMesh {
  Points3 vertices;
  Faces faces;
  Points3 joints;
};

PosedMesh pose_mesh(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest_shape);
PosedMesh pose_mesh(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                    const Eigen::VectorXd& beta);

struct PoseGradient {
  Eigen::VectorXd theta;
  Eigen::VectorXd alpha;
  Eigen::Vector3d gamma;
  Eigen::Vector2d kappa;
  Points3 shape;  // with respect to rest_shape

  void reset(int num_vertices, int num_joints);
};

/// Accumulates d(loss)/d(params, rest_shape) into `out` given
/// d(loss)/d(posed vertices). `cache` must come from pose_forward with
/// derivatives enabled.
void pose_backward(const TemplateModel& tmpl, const PoseParams& params, const PoseCache& cache,
                   const Points3& grad_posed, PoseGradient& out);

}  // namespace avishape
