#pragma once

#include "avishape/annotation.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/template_model.hpp"

#include <Eigen/Core>

#include <array>
#include <utility>
#include <vector>

namespace avishape {

/// Term weights and robust-loss scales. Defaults are starting points tuned
/// on the synthetic recovery suite.
struct EnergyWeights {
  double w_kp = 1.0;
  double w_msk = 50.0;
  double w_prior = 0.01;
  double w_edge = 0.2;
  double w_lap = 20.0;
  double w_arap = 0.1;
  double w_sym = 300.0;
  double w_ortho = 0.0;
  /// Geman-McClure scale as a fraction of the instance box diagonal.
  double gm_sigma_fraction = 0.05;
  /// Smooth-L1 knee on mask residuals.
  double huber_delta = 0.5;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Robust losses

/// rho(e) = e^2 s^2 / (e^2 + s^2).
double geman_mcclure(double e, double scale);
/// Quadratic r^2 / (2 delta) for |r| <= delta, |r| - delta / 2 beyond.
double smooth_l1(double r, double delta);

// ---------------------------------------------------------------------------
// Data terms. Every `grad` argument is optional and accumulated into.

/// Sum over visible keypoints of rho(|pred - annotated|). Throws
/// InvalidInput when no keypoint is visible.
double keypoint_energy_2d(const Points2& predicted, const Points2& annotated, const std::vector<bool>& visible,
                          double gm_scale, Points2* grad = nullptr);

/// lambda * mean_p smooth_l1(rendered(p) - gt(p)).
double silhouette_energy_image(const Image& rendered, const BinaryMask& gt, double lambda, double delta,
                               Image* grad = nullptr);

/// Squared Mahalanobis distance of theta and alpha to the prior, times weight.
double prior_energy(const PoseParams& params, const PosePrior& prior, double weight = 1.0,
                    Eigen::VectorXd* grad_theta = nullptr, Eigen::VectorXd* grad_alpha = nullptr);

// ---------------------------------------------------------------------------
// Shape regularizers

/// Sum over mesh edges of |dv_p - dv_q| (unsquared).
double edge_energy(const Points3& dv, const TemplateModel& tmpl, Points3* grad = nullptr);
double edge_energy(const Points3& dv, const std::vector<std::array<int, 2>>& edges, Points3* grad = nullptr);

/// |L dv|^2 with L the uniform graph Laplacian.
double laplacian_energy(const Points3& dv, const TemplateModel& tmpl, Points3* grad = nullptr);
double laplacian_energy(const Points3& dv, const std::vector<std::vector<int>>& neighbors, Points3* grad = nullptr);

struct ArapStats {
  int degenerate_rings = 0;
};

/// As-rigid-as-possible energy of v_shape against the template rest pose,
/// per-vertex rigidity weighted, uniform edge weights.
double arap_energy(const Points3& v_shape, const TemplateModel& tmpl, Points3* grad = nullptr,
                   ArapStats* stats = nullptr);
double arap_energy(const Points3& v_shape, const Points3& rest, const std::vector<std::vector<int>>& neighbors,
                   const Eigen::VectorXd& rigidity, Points3* grad = nullptr, ArapStats* stats = nullptr);

/// Best rotation aligning rest one-ring edges onto deformed ones (det +1).
Eigen::Matrix3d arap_rotation(const Eigen::Matrix3d& covariance);

/// Mirror-pair penalty |v_p - mirror(v_q)|^2; midline self-pairs give 2 x_p^2.
double symmetry_energy(const Points3& v_shape, const TemplateModel& tmpl, Points3* grad = nullptr);
double symmetry_energy(const Points3& v_shape, const std::vector<std::pair<int, int>>& pairs,
                       Points3* grad = nullptr);

/// Frobenius norm of V^T V - I.
double ortho_energy(const Eigen::MatrixXd& basis, Eigen::MatrixXd* grad = nullptr);

/// Weighted E_edge + E_lap on the displacement and E_arap + E_sym on the
/// shape it produces. `grad` is with respect to the displacement.
struct SmoothnessTerms {
  double edge = 0.0, lap = 0.0, arap = 0.0, sym = 0.0;
  double total() const { return edge + lap + arap + sym; }
};
SmoothnessTerms smoothness_energy(const Points3& displacement, const TemplateModel& tmpl, const EnergyWeights& w,
                                  Points3* grad = nullptr);

// ---------------------------------------------------------------------------
// Per-instance reprojection energy through the posing function

struct DataTermOptions {
  bool use_keypoints = true;
  bool use_mask = true;
  double sigma = 2.0;
  double cull_sigmas = 10.0;
};

struct DataTerms {
  double keypoints = 0.0;
  double mask = 0.0;
  double total() const { return keypoints + mask; }
};

/// Weighted keypoint + silhouette energy of one instance for a posed rest
/// shape. If `grad` is given, accumulates the pose and rest-shape gradient.
DataTerms instance_data_energy(const TemplateModel& tmpl, const Camera& camera, const AnnotatedInstance& instance,
                               const PoseParams& params, const Points3& rest_shape, const EnergyWeights& weights,
                               const DataTermOptions& options, PoseGradient* grad = nullptr);

/// Unweighted keypoint energy of the posed, projected model.
double keypoint_energy(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                       const Eigen::VectorXd& beta, const Camera& camera, const AnnotatedInstance& instance,
                       double gm_scale);

/// Silhouette energy of the posed, projected model (lambda included).
double silhouette_energy(const TemplateModel& tmpl, const PoseParams& params, const ShapeState& shape,
                         const Eigen::VectorXd& beta, const Camera& camera, const AnnotatedInstance& instance,
                         double sigma, double lambda, double delta);

}  // namespace avishape
