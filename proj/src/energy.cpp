#include "avishape/energy.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace avishape {

void EnergyWeights::validate() const {
  for (double w : {w_kp, w_msk, w_prior, w_edge, w_lap, w_arap, w_sym, w_ortho}) {
    if (!(w >= 0.0)) throw InvalidInput("energy weights: all weights must be nonnegative");
  }
  if (!(gm_sigma_fraction > 0.0)) throw InvalidInput("energy weights: gm_sigma_fraction must be positive");
  if (!(huber_delta > 0.0)) throw InvalidInput("energy weights: huber_delta must be positive");
}

double geman_mcclure(double e, double scale) {
  const double e2 = e * e, s2 = scale * scale;
  return e2 * s2 / (e2 + s2);
}

double smooth_l1(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r / delta : a - 0.5 * delta;
}

double keypoint_energy_2d(const Points2& predicted, const Points2& annotated, const std::vector<bool>& visible,
                          double gm_scale, Points2* grad) {
  if (predicted.rows() != annotated.rows() || static_cast<Eigen::Index>(visible.size()) != annotated.rows()) {
    throw InvalidInput("keypoint energy: keypoint counts differ");
  }
  if (!(gm_scale > 0.0)) throw InvalidInput("keypoint energy: Geman-McClure scale must be positive");
  const double s2 = gm_scale * gm_scale;
  double total = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < predicted.rows(); ++k) {
    if (!visible[k]) continue;
    ++used;
    const Eigen::Vector2d r = (predicted.row(k) - annotated.row(k)).transpose();
    const double e2 = r.squaredNorm();
    const double den = e2 + s2;
    total += e2 * s2 / den;
    if (grad) grad->row(k) += (2.0 * s2 * s2 / (den * den)) * r.transpose();
  }
  if (used == 0) throw InvalidInput("keypoint energy: no visible keypoints");
  return total;
}

double silhouette_energy_image(const Image& rendered, const BinaryMask& gt, double lambda, double delta,
                               Image* grad) {
  if (rendered.rows() != gt.rows() || rendered.cols() != gt.cols()) {
    throw InvalidInput("silhouette energy: rendered and ground-truth mask sizes differ");
  }
  const double scale = lambda / static_cast<double>(rendered.size());
  double total = 0.0;
  for (Eigen::Index y = 0; y < rendered.rows(); ++y) {
    for (Eigen::Index x = 0; x < rendered.cols(); ++x) {
      const double r = rendered(y, x) - static_cast<double>(gt(y, x));
      total += smooth_l1(r, delta);
      if (grad) {
        const double d = std::abs(r) <= delta ? r / delta : (r > 0.0 ? 1.0 : -1.0);
        (*grad)(y, x) += scale * d;
      }
    }
  }
  return scale * total;
}

double prior_energy(const PoseParams& params, const PosePrior& prior, double weight, Eigen::VectorXd* grad_theta,
                    Eigen::VectorXd* grad_alpha) {
  if (params.theta.size() != prior.theta_mean().size() || params.alpha.size() != prior.alpha_mean().size()) {
    throw InvalidInput("prior energy: parameter sizes differ from prior");
  }
  const Eigen::VectorXd dt = params.theta - prior.theta_mean();
  const Eigen::VectorXd da = params.alpha - prior.alpha_mean();
  const Eigen::VectorXd st = prior.theta_llt().solve(dt);
  const Eigen::VectorXd sa = prior.alpha_llt().solve(da);
  if (grad_theta) *grad_theta += 2.0 * weight * st;
  if (grad_alpha) *grad_alpha += 2.0 * weight * sa;
  return weight * (dt.dot(st) + da.dot(sa));
}

double edge_energy(const Points3& dv, const TemplateModel& tmpl, Points3* grad) {
  if (dv.rows() != tmpl.num_vertices()) throw InvalidInput("edge energy: displacement must have N rows");
  return edge_energy(dv, tmpl.edges(), grad);
}

double edge_energy(const Points3& dv, const std::vector<std::array<int, 2>>& edges, Points3* grad) {
  double total = 0.0;
  for (const auto& e : edges) {
    const Eigen::RowVector3d d = dv.row(e[0]) - dv.row(e[1]);
    const double n = d.norm();
    total += n;
    if (grad && n > 0.0) {
      grad->row(e[0]) += d / n;
      grad->row(e[1]) -= d / n;
    }
  }
  return total;
}

double laplacian_energy(const Points3& dv, const TemplateModel& tmpl, Points3* grad) {
  if (dv.rows() != tmpl.num_vertices()) throw InvalidInput("laplacian energy: displacement must have N rows");
  return laplacian_energy(dv, tmpl.neighbors(), grad);
}

double laplacian_energy(const Points3& dv, const std::vector<std::vector<int>>& nbrs, Points3* grad) {
  if (dv.rows() != static_cast<Eigen::Index>(nbrs.size())) {
    throw InvalidInput("laplacian energy: displacement must have one row per vertex");
  }
  double total = 0.0;
  for (int p = 0; p < static_cast<int>(nbrs.size()); ++p) {
    if (nbrs[p].empty()) continue;
    const double inv = 1.0 / static_cast<double>(nbrs[p].size());
    Eigen::RowVector3d r = dv.row(p);
    for (int q : nbrs[p]) r -= inv * dv.row(q);
    total += r.squaredNorm();
    if (grad) {
      grad->row(p) += 2.0 * r;
      for (int q : nbrs[p]) grad->row(q) -= 2.0 * inv * r;
    }
  }
  return total;
}

Eigen::Matrix3d arap_rotation(const Eigen::Matrix3d& covariance) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(covariance, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d v = svd.matrixV();
  const Eigen::Matrix3d u = svd.matrixU();
  Eigen::Matrix3d r = v * u.transpose();
  if (r.determinant() < 0.0) {
    v.col(2) = -v.col(2);
    r = v * u.transpose();
  }
  return r;
}

double arap_energy(const Points3& v_shape, const TemplateModel& tmpl, Points3* grad, ArapStats* stats) {
  if (v_shape.rows() != tmpl.num_vertices()) throw InvalidInput("arap energy: shape must have N vertices");
  return arap_energy(v_shape, tmpl.vertices(), tmpl.neighbors(), tmpl.rigidity(), grad, stats);
}

double arap_energy(const Points3& v_shape, const Points3& rest, const std::vector<std::vector<int>>& nbrs,
                   const Eigen::VectorXd& rigidity, Points3* grad, ArapStats* stats) {
  const auto n = static_cast<Eigen::Index>(nbrs.size());
  if (v_shape.rows() != n || rest.rows() != n || rigidity.size() != n) {
    throw InvalidInput("arap energy: shape, rest pose, neighbors and rigidity sizes differ");
  }
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(n); ++i) {
    if (nbrs[i].empty()) continue;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nbrs[i]) {
      const Eigen::Vector3d e = (rest.row(i) - rest.row(j)).transpose();
      const Eigen::Vector3d ed = (v_shape.row(i) - v_shape.row(j)).transpose();
      cov += e * ed.transpose();
    }
    if (cov.cwiseAbs().maxCoeff() == 0.0) {
      if (stats) ++stats->degenerate_rings;
      continue;
    }
    const Eigen::Matrix3d R = arap_rotation(cov);
    for (int j : nbrs[i]) {
      const Eigen::Vector3d e = (rest.row(i) - rest.row(j)).transpose();
      const Eigen::Vector3d res = (v_shape.row(i) - v_shape.row(j)).transpose() - R * e;
      total += rigidity[i] * res.squaredNorm();
      if (grad) {
        grad->row(i) += 2.0 * rigidity[i] * res.transpose();
        grad->row(j) -= 2.0 * rigidity[i] * res.transpose();
      }
    }
  }
  return total;
}

double symmetry_energy(const Points3& v_shape, const TemplateModel& tmpl, Points3* grad) {
  if (v_shape.rows() != tmpl.num_vertices()) throw InvalidInput("symmetry energy: shape must have N vertices");
  return symmetry_energy(v_shape, tmpl.symmetry_pairs(), grad);
}

double symmetry_energy(const Points3& v_shape, const std::vector<std::pair<int, int>>& pairs, Points3* grad) {
  double total = 0.0;
  for (const auto& [p, q] : pairs) {
    if (p == q) {
      const double x = v_shape(p, 0);
      total += 2.0 * x * x;
      if (grad) (*grad)(p, 0) += 4.0 * x;
      continue;
    }
    // v_p - mirror(v_q) = (x_p + x_q, y_p - y_q, z_p - z_q)
    const Eigen::RowVector3d r(v_shape(p, 0) + v_shape(q, 0), v_shape(p, 1) - v_shape(q, 1),
                               v_shape(p, 2) - v_shape(q, 2));
    total += r.squaredNorm();
    if (grad) {
      grad->row(p) += 2.0 * r;
      (*grad)(q, 0) += 2.0 * r.x();
      (*grad)(q, 1) -= 2.0 * r.y();
      (*grad)(q, 2) -= 2.0 * r.z();
    }
  }
  return total;
}

double ortho_energy(const Eigen::MatrixXd& basis, Eigen::MatrixXd* grad) {
  if (basis.cols() < 1) throw InvalidInput("ortho energy: basis needs at least one column");
  const Eigen::MatrixXd m = basis.transpose() * basis - Eigen::MatrixXd::Identity(basis.cols(), basis.cols());
  const double e = m.norm();
  if (grad && e > 0.0) *grad += (2.0 / e) * basis * m;
  return e;
}

SmoothnessTerms smoothness_energy(const Points3& displacement, const TemplateModel& tmpl, const EnergyWeights& w,
                                  Points3* grad) {
  SmoothnessTerms t;
  Points3 g;
  Points3* gp = nullptr;
  if (grad) {
    g = Points3::Zero(displacement.rows(), 3);
    gp = &g;
  }
  auto add = [&](double weight, auto&& fn) -> double {
    if (weight == 0.0) return 0.0;
    if (gp) gp->setZero();
    const double v = weight * fn(gp);
    if (grad) *grad += weight * g;
    return v;
  };
  const Points3 shape = tmpl.vertices() + displacement;
  t.edge = add(w.w_edge, [&](Points3* gg) { return edge_energy(displacement, tmpl, gg); });
  t.lap = add(w.w_lap, [&](Points3* gg) { return laplacian_energy(displacement, tmpl, gg); });
  t.arap = add(w.w_arap, [&](Points3* gg) { return arap_energy(shape, tmpl, gg); });
  t.sym = add(w.w_sym, [&](Points3* gg) { return symmetry_energy(shape, tmpl, gg); });
  return t;
}

DataTerms instance_data_energy(const TemplateModel& tmpl, const Camera& camera, const AnnotatedInstance& instance,
                               const PoseParams& params, const Points3& rest_shape, const EnergyWeights& weights,
                               const DataTermOptions& options, PoseGradient* grad) {
  DataTerms out;
  const bool need_grad = grad != nullptr;
  const PoseCache cache = pose_forward(tmpl, params, rest_shape, need_grad);
  Points3 g_posed;
  if (need_grad) g_posed = Points3::Zero(tmpl.num_vertices(), 3);

  if (options.use_keypoints && weights.w_kp > 0.0) {
    const Points3 kp3 = keypoint_positions(tmpl, cache.posed);
    const Points2 kp2 = project(camera, kp3);
    Points2 g2;
    if (need_grad) g2 = Points2::Zero(kp2.rows(), 2);
    const double gm = weights.gm_sigma_fraction * instance.bbox.diagonal();
    out.keypoints =
        weights.w_kp * keypoint_energy_2d(kp2, instance.keypoints, instance.visible, gm, need_grad ? &g2 : nullptr);
    if (need_grad) {
      g2 *= weights.w_kp;
      Points3 g3 = Points3::Zero(kp3.rows(), 3);
      project_backward(camera, kp3, g2, g3);
      for (int k = 0; k < tmpl.num_keypoints(); ++k) {
        const auto& verts = tmpl.keypoints()[k].vertices;
        const double share = 1.0 / static_cast<double>(verts.size());
        for (int v : verts) g_posed.row(v) += share * g3.row(k);
      }
    }
  }

  if (options.use_mask && weights.w_msk > 0.0) {
    SoftRasterOptions ro;
    ro.sigma = options.sigma;
    ro.cull_sigmas = options.cull_sigmas;
    const Points2 proj = project(camera, cache.posed);
    const SoftRaster raster = soft_rasterize(proj, tmpl.faces(), camera.width, camera.height, ro);
    Image g_img;
    if (need_grad) g_img = Image::Zero(camera.height, camera.width);
    out.mask = silhouette_energy_image(raster.occupancy, instance.mask, weights.w_msk, weights.huber_delta,
                                       need_grad ? &g_img : nullptr);
    if (need_grad) {
      const Points2 g_uv = soft_rasterize_backward(proj, tmpl.faces(), raster, g_img, ro);
      project_backward(camera, cache.posed, g_uv, g_posed);
    }
  }

  if (need_grad) pose_backward(tmpl, params, cache, g_posed, *grad);
  return out;
}

double keypoint_energy(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                       const Eigen::VectorXd& beta, const Camera& camera, const AnnotatedInstance& instance,
                       double gm_scale) {
  const PosedMesh mesh = pose_mesh(tmpl, params, shape, beta);
  const Points2 kp2 = project(camera, keypoint_positions(tmpl, mesh.vertices));
  return keypoint_energy_2d(kp2, instance.keypoints, instance.visible, gm_scale);
}

double silhouette_energy(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                         const Eigen::VectorXd& beta, const Camera& camera, const AnnotatedInstance& instance,
                         double sigma, double lambda, double delta) {
  if (instance.mask.rows() != camera.height || instance.mask.cols() != camera.width) {
    throw InvalidInput("silhouette energy: mask size differs from camera image size");
  }
  const PosedMesh mesh = pose_mesh(tmpl, params, shape, beta);
  return silhouette_energy_image(render_soft_silhouette(mesh, camera, sigma), instance.mask, lambda, delta);
}

}  // namespace avishape
