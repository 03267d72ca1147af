#include "avishape/posing.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace avishape {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return k;
}

// Scale every listed vertex of `in` about the part anchor.
void apply_part_scale(const PartScaling& part, double s, Points3& pts) {
  const Eigen::Matrix3d A = Eigen::Matrix3d::Identity() + (s - 1.0) * part.axis * part.axis.transpose();
  for (int v : part.vertices) {
    Eigen::Vector3d d = pts.row(v).transpose() - part.anchor;
    pts.row(v) = (part.anchor + A * d).transpose();
  }
}

// Adjoint of apply_part_scale. `before` holds the vertices fed into the
// scaling; grad is transformed in place. Returns d/ds.
double part_scale_backward(const PartScaling& part, double s, const Points3& before, Points3& grad) {
  const Eigen::Matrix3d aat = part.axis * part.axis.transpose();
  const Eigen::Matrix3d A = Eigen::Matrix3d::Identity() + (s - 1.0) * aat;
  double ds = 0.0;
  for (int v : part.vertices) {
    Eigen::Vector3d g = grad.row(v).transpose();
    Eigen::Vector3d d = before.row(v).transpose() - part.anchor;
    ds += g.dot(aat * d);
    grad.row(v) = (A * g).transpose();
  }
  return ds;
}

}  // namespace

PoseParams PoseParams::neutral(int num_joints) {
  PoseParams p;
  p.theta = Eigen::VectorXd::Zero(3 * num_joints);
  p.alpha = Eigen::VectorXd::Ones(num_joints);
  return p;
}

void PoseParams::validate(int num_joints) const {
  if (theta.size() != 3 * num_joints) throw InvalidInput("pose: theta must have 3J entries");
  if (alpha.size() != num_joints) throw InvalidInput("pose: alpha must have J entries");
  if (!theta.allFinite() || !alpha.allFinite() || !gamma.allFinite() || !kappa.allFinite()) {
    throw InvalidInput("pose: non-finite parameter");
  }
  if ((alpha.array() <= 0.0).any()) throw InvalidInput("pose: alpha must be strictly positive");
  if ((kappa.array() <= 0.0).any()) throw InvalidInput("pose: kappa must be strictly positive");
}

bool PoseParams::operator==(const PoseParams& o) const {
  return theta == o.theta && alpha == o.alpha && gamma == o.gamma && kappa == o.kappa;
}

ShapeState ShapeState::zero(int num_vertices, int k) {
  ShapeState s;
  s.dv = Eigen::VectorXd::Zero(3 * num_vertices);
  s.basis = Eigen::MatrixXd::Zero(3 * num_vertices, k);
  return s;
}

Points3 apply_shape(const TemplateModel& tmpl, const ShapeState& shape, const Eigen::VectorXd& beta) {
  const Eigen::Index n3 = 3 * tmpl.num_vertices();
  if (shape.dv.size() != n3) throw InvalidInput("apply_shape: dv must have 3N entries");
  if (shape.basis.rows() != n3 && shape.basis.cols() > 0) {
    throw InvalidInput("apply_shape: basis must have 3N rows");
  }
  if (beta.size() != shape.basis.cols()) throw InvalidInput("apply_shape: beta length differs from basis columns");
  Points3 out = tmpl.vertices();
  flat(out) += shape.dv;
  if (beta.size() > 0) flat(out) += shape.basis * beta;
  return out;
}

PartScaling part_scaling(const TemplateModel& tmpl, const std::string& group) {
  const PartGroup& part = tmpl.part(group);
  return {part.vertices, tmpl.joints().row(part.anchor_joint).transpose(), tmpl.part_axis(group)};
}

Points3 scale_part(const Points3& vertices, const PartScaling& part, double scale) {
  if (!(scale > 0.0)) throw InvalidInput("scale_part: scale must be positive");
  Points3 out = vertices;
  if (scale != 1.0) apply_part_scale(part, scale, out);
  return out;
}

AxisAngleRotation axis_angle_rotation(const Eigen::Vector3d& w, bool with_derivatives) {
  const double t2 = w.squaredNorm();
  const double t = std::sqrt(t2);
  double a, b, c, d;  // a = sin t / t, b = (1 - cos t) / t^2, c = a'/t, d = b'/t
  if (t < 1e-3) {
    const double t4 = t2 * t2;
    a = 1.0 - t2 / 6.0 + t4 / 120.0;
    b = 0.5 - t2 / 24.0 + t4 / 720.0;
    c = -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0;
    d = -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0;
  } else {
    const double s = std::sin(t);
    const double co = std::cos(t);
    a = s / t;
    b = (1.0 - co) / t2;
    c = (t * co - s) / (t2 * t);
    d = (t * s - 2.0 * (1.0 - co)) / (t2 * t2);
  }
  const Eigen::Matrix3d K = skew(w);
  const Eigen::Matrix3d K2 = K * K;
  AxisAngleRotation out;
  out.R = Eigen::Matrix3d::Identity() + a * K + b * K2;
  if (with_derivatives) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Matrix3d E = skew(Eigen::Vector3d::Unit(k));
      out.dR[k] = c * w[k] * K + a * E + d * w[k] * K2 + b * (E * K + K * E);
    }
  }
  return out;
}

Eigen::Vector3d wrap_axis_angle(const Eigen::Vector3d& w) {
  const double t = w.norm();
  if (t <= std::numbers::pi) return w;
  const double wrapped = std::remainder(t, 2.0 * std::numbers::pi);  // in [-pi, pi]
  return w * (wrapped / t);
}

PoseCache pose_forward(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest_shape,
                       bool with_derivatives) {
  const int n = tmpl.num_vertices();
  const int nj = tmpl.num_joints();
  params.validate(nj);
  if (rest_shape.rows() != n) throw InvalidInput("pose_mesh: rest shape must have N vertices");

  PoseCache c;
  c.input = rest_shape;
  c.after_beak = rest_shape;
  if (params.kappa[0] != 1.0) apply_part_scale(part_scaling(tmpl, "beak"), params.kappa[0], c.after_beak);
  c.rest = c.after_beak;
  if (params.kappa[1] != 1.0) apply_part_scale(part_scaling(tmpl, "tail"), params.kappa[1], c.rest);

  const Points3& vbird = tmpl.vertices();
  c.joints_rest = tmpl.joints();
  for (int j = 0; j < nj; ++j) {
    for (const auto& e : tmpl.joint_region(j)) {
      c.joints_rest.row(j) += e.weight * (c.rest.row(e.index) - vbird.row(e.index));
    }
  }

  const auto& parent = tmpl.parent();
  c.joints_scaled = c.joints_rest;
  for (int j : tmpl.joint_order()) {
    int p = parent[j];
    if (p < 0) continue;
    c.joints_scaled.row(j) = c.joints_scaled.row(p) + params.alpha[j] * (c.joints_rest.row(j) - c.joints_rest.row(p));
  }

  c.local.resize(nj);
  c.world_rot.resize(nj);
  c.world_trans.resize(nj, 3);
  for (int j : tmpl.joint_order()) {
    c.local[j] = axis_angle_rotation(params.theta.segment<3>(3 * j), with_derivatives);
    int p = parent[j];
    if (p < 0) {
      c.world_rot[j] = c.local[j].R;
      c.world_trans.row(j) = c.joints_scaled.row(j);
    } else {
      c.world_rot[j] = c.world_rot[p] * c.local[j].R;
      Eigen::Vector3d off = (c.joints_scaled.row(j) - c.joints_scaled.row(p)).transpose();
      c.world_trans.row(j) = c.world_trans.row(p) + (c.world_rot[p] * off).transpose();
    }
  }

  c.posed.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    const Eigen::Vector3d s = c.rest.row(i).transpose();
    for (const auto& e : tmpl.skin_row(i)) {
      const int j = e.index;
      acc += e.weight * (c.world_rot[j] * (s - c.joints_rest.row(j).transpose()) + c.world_trans.row(j).transpose());
    }
    c.posed.row(i) = (acc + params.gamma).transpose();
  }
  return c;
}

PosedMesh pose_mesh(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest_shape) {
  PoseCache c = pose_forward(tmpl, params, rest_shape, false);
  PosedMesh m;
  m.vertices = std::move(c.posed);
  m.faces = tmpl.faces();
  m.joints = c.world_trans.rowwise() + params.gamma.transpose();
  return m;
}

PosedMesh pose_mesh(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                    const Eigen::VectorXd& beta) {
  return pose_mesh(tmpl, params, apply_shape(tmpl, shape, beta));
}

void PoseGradient::reset(int num_vertices, int num_joints) {
  theta = Eigen::VectorXd::Zero(3 * num_joints);
  alpha = Eigen::VectorXd::Zero(num_joints);
  gamma.setZero();
  kappa.setZero();
  shape = Points3::Zero(num_vertices, 3);
}

void pose_backward(const TemplateModel& tmpl, const PoseParams& params, const PoseCache& c,
                   const Points3& grad_posed, PoseGradient& out) {
  const int n = tmpl.num_vertices();
  const int nj = tmpl.num_joints();
  const auto& parent = tmpl.parent();

  std::vector<Eigen::Matrix3d> g_rot(nj, Eigen::Matrix3d::Zero());
  Points3 g_trans = Points3::Zero(nj, 3);
  Points3 g_jrest = Points3::Zero(nj, 3);
  Points3 g_rest = Points3::Zero(n, 3);

  // skinning
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d g = grad_posed.row(i).transpose();
    out.gamma += g;
    const Eigen::Vector3d s = c.rest.row(i).transpose();
    for (const auto& e : tmpl.skin_row(i)) {
      const int j = e.index;
      const Eigen::Vector3d wg = e.weight * g;
      g_rot[j] += wg * (s - c.joints_rest.row(j).transpose()).transpose();
      g_trans.row(j) += wg.transpose();
      const Eigen::Vector3d rtg = c.world_rot[j].transpose() * wg;
      g_rest.row(i) += rtg.transpose();
      g_jrest.row(j) -= rtg.transpose();
    }
  }

  // forward kinematics, children before parents
  Points3 g_jscaled = Points3::Zero(nj, 3);
  const auto& order = tmpl.joint_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int j = *it;
    const int p = parent[j];
    Eigen::Matrix3d g_local;
    if (p < 0) {
      g_local = g_rot[j];
      g_jscaled.row(j) += g_trans.row(j);
    } else {
      const Eigen::Vector3d off = (c.joints_scaled.row(j) - c.joints_scaled.row(p)).transpose();
      const Eigen::Vector3d gt = g_trans.row(j).transpose();
      g_rot[p] += gt * off.transpose();
      const Eigen::Vector3d g_off = c.world_rot[p].transpose() * gt;
      g_jscaled.row(j) += g_off.transpose();
      g_jscaled.row(p) -= g_off.transpose();
      g_trans.row(p) += g_trans.row(j);
      g_rot[p] += g_rot[j] * c.local[j].R.transpose();
      g_local = c.world_rot[p].transpose() * g_rot[j];
    }
    for (int k = 0; k < 3; ++k) out.theta[3 * j + k] += (g_local.array() * c.local[j].dR[k].array()).sum();
  }

  // bone scaling
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int j = *it;
    const int p = parent[j];
    if (p < 0) {
      g_jrest.row(j) += g_jscaled.row(j);
      continue;
    }
    const Eigen::RowVector3d g = g_jscaled.row(j);
    g_jscaled.row(p) += g;
    out.alpha[j] += g.dot(c.joints_rest.row(j) - c.joints_rest.row(p));
    g_jrest.row(j) += params.alpha[j] * g;
    g_jrest.row(p) -= params.alpha[j] * g;
  }

  // joint re-derivation
  for (int j = 0; j < nj; ++j) {
    for (const auto& e : tmpl.joint_region(j)) g_rest.row(e.index) += e.weight * g_jrest.row(j);
  }

  // part scaling, reverse order: tail then beak
  out.kappa[1] += part_scale_backward(part_scaling(tmpl, "tail"), params.kappa[1], c.after_beak, g_rest);
  out.kappa[0] += part_scale_backward(part_scaling(tmpl, "beak"), params.kappa[0], c.input, g_rest);
  out.shape += g_rest;
}

}  // namespace avishape
