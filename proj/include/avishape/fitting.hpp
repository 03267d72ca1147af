#pragma once

#include "avishape/annotation.hpp"
#include "avishape/energy.hpp"
#include "avishape/optim.hpp"
#include "avishape/pca.hpp"
#include "avishape/posing.hpp"
#include "avishape/prior.hpp"
#include "avishape/render.hpp"
#include "avishape/synth_db.hpp"
#include "avishape/template_model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace avishape {

// ---------------------------------------------------------------------------
// Shape spaces used for per-instance fitting

/// Rest shapes mean + components * beta (3N rows). Variances scale the
/// coefficient ridge; an empty component matrix means a fixed shape.
struct ShapeSpace {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd variances;

  int rank() const { return static_cast<int>(components.cols()); }
  Points3 shape(const Eigen::VectorXd& beta) const;
  static ShapeSpace fixed(const Points3& rest);
};

// ---------------------------------------------------------------------------
// Per-instance pose (and coefficient) fitting

/// One optimization stage. Block names: theta_root, theta_body, alpha,
/// gamma, kappa, beta.
struct FitStage {
  std::string name;
  std::vector<std::string> blocks;
  bool use_mask = false;
  double sigma = 2.0;
  int iters = 100;
  Algorithm algorithm = Algorithm::adam;
  double step = 0.01;
};

/// Default schedule: camera (root rotation + translation, keypoints),
/// pose (all of theta, alpha, gamma, keypoints), silhouette (adds kappa and
/// the mask term) and a refinement pass with a smaller step. sigma starts at
/// 2 px and halves at each stage boundary.
std::vector<FitStage> default_align_stages();
/// The align schedule followed by the same silhouette stages with beta active.
std::vector<FitStage> default_fit_stages();

struct FitConfig {
  EnergyWeights weights;
  std::vector<FitStage> stages = default_align_stages();
  double tolerance = 1e-7;
  double cull_sigmas = 10.0;
  /// Ridge weight on sum_c beta_c^2 / variance_c.
  double w_beta = 1.0;
  double fail_pck = 0.5;
  double fail_iou = 0.4;
  double pck_threshold = 0.05;

  void validate() const;
};

struct FitResult {
  PoseParams params;
  Eigen::VectorXd beta;
  double pck = 0.0;
  double iou = 0.0;
  double energy = 0.0;
  bool failed = false;
  std::string failure;
  std::vector<TraceRow> trace;
};

/// PCK (against the visible annotated keypoints) and IoU (against the
/// annotated mask) of a posed rest shape.
void score_fit(const TemplateModel& tmpl, const Camera& camera, const AnnotatedInstance& instance,
               const PoseParams& params, const Points3& rest, double pck_threshold, double& pck_out, double& iou_out);

/// Minimizes keypoint + silhouette + prior energies over the pose and, when a
/// stage activates it, the shape-space coefficients, starting from
/// `init` (or init_pose over `db` when not given). Divergence or low scores
/// mark the result failed rather than throwing.
FitResult fit_model_to_instance(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                                const ShapeSpace& space, const AnnotatedInstance& instance, const SynthDb& db,
                                const FitConfig& config, const std::optional<PoseParams>& init = std::nullopt);

/// Template-only fit (shape fixed at v_bird).
FitResult align_instance(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                         const AnnotatedInstance& instance, const SynthDb& db, const FitConfig& config);

// ---------------------------------------------------------------------------
// Species mean and individual basis

struct ShapeFitConfig {
  EnergyWeights weights;
  /// Iterations per sigma level.
  int iters = 300;
  double step = 0.002;
  double tolerance = 0.0;
  bool use_keypoints = true;
  bool use_mask = true;
  /// Coarse-to-fine silhouette blur levels, run in order.
  std::vector<double> sigmas = {0.5, 0.25, 0.1};
  double cull_sigmas = 10.0;
  int threads = 1;

  void validate() const;
};

struct MeanFitResult {
  Eigen::VectorXd dv;
  std::vector<double> iou_before;
  std::vector<double> iou_after;
  std::vector<TraceRow> trace;
};

/// Minimizes the summed per-instance data terms plus the smoothness terms
/// over dv with every pose frozen. Needs at least 2 instances.
MeanFitResult fit_species_mean(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const ShapeFitConfig& config);

struct BasisConfig : ShapeFitConfig {
  int k = 4;
  std::uint64_t seed = 1;
  /// Standard deviation of the random V initialization, in body lengths.
  double init_scale = 1e-3;
  /// Step multiplier for the coefficient blocks relative to V.
  double beta_step_scale = 50.0;
  BasisConfig() {
    iters = 300;
    step = 0.002;
  }
};

struct BasisFitResult {
  Eigen::MatrixXd basis;               // 3N x K
  std::vector<Eigen::VectorXd> betas;  // one per instance
  std::vector<double> iou_mean_only;
  std::vector<double> iou_after;
  std::vector<TraceRow> trace;
};

/// Jointly minimizes over V and every beta_i with poses and dv frozen.
/// Smoothness terms apply per instance to dv + V beta_i. Needs K >= 1 and
/// K < number of instances.
BasisFitResult fit_individuals(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const Eigen::VectorXd& dv, const BasisConfig& config);

/// PCA over reconstructed rest shapes (one 3N row per shape).
Pca relearn_pca(const Eigen::MatrixXd& shapes, int k);

// ---------------------------------------------------------------------------
// The stage objectives at an explicit point, for verification. The returned
// function evaluates the objective at a flat parameter vector (same layout as
// x) and writes the analytic gradient when asked. Inputs are held by
// reference and must outlive the result.

struct ObjectiveProbe {
  Eigen::VectorXd x;
  std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)> f;
};

/// Per-instance objective (pose blocks, plus beta for a non-fixed space).
ObjectiveProbe pose_objective(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                              const ShapeSpace& space, const AnnotatedInstance& instance, const FitConfig& config,
                              const FitStage& stage, const PoseParams& params, const Eigen::VectorXd& beta);
/// Species-mean objective over dv.
ObjectiveProbe mean_objective(const TemplateModel& tmpl, const Camera& camera,
                              const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                              const ShapeFitConfig& config, double sigma, const Eigen::VectorXd& dv);
/// Basis objective over V (column-major) followed by every beta_i.
ObjectiveProbe basis_objective(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const Eigen::VectorXd& dv, const BasisConfig& config, double sigma,
                               const Eigen::MatrixXd& basis, const std::vector<Eigen::VectorXd>& betas);

// ---------------------------------------------------------------------------
// Models

struct SpeciesModel {
  std::string species;
  std::string template_hash;
  Eigen::VectorXd dv;
  Eigen::MatrixXd basis;
  std::vector<std::string> instance_ids;
  Eigen::MatrixXd betas;  // instances x K
  Pca pca;                // over v_bird + dv + V beta_i

  /// PCA space when it has any component, otherwise v_bird + dv.
  ShapeSpace shape_space(const TemplateModel& tmpl) const;
  ShapeSpace mean_space(const TemplateModel& tmpl) const;
};

struct MultiSpeciesModel {
  std::string template_hash;
  bool normalized = true;
  Pca pca;
  std::vector<std::string> species;
  Eigen::MatrixXd coefficients;  // species x C

  /// Shape space in template units: normalized shapes are scaled to the
  /// template body length and moved to the template centroid.
  ShapeSpace shape_space(const TemplateModel& tmpl) const;
};

/// Rescales a rest shape about its centroid to unit body length and moves
/// the centroid to the origin.
Points3 normalize_shape(const TemplateModel& tmpl, const Points3& shape);

/// PCA over the species mean shapes v_bird + dv. A rank above S - 1 is
/// clamped and reported through `warnings`.
MultiSpeciesModel build_multispecies(const TemplateModel& tmpl, const std::vector<SpeciesModel>& models,
                                     bool normalize, int rank, std::vector<std::string>* warnings = nullptr);

}  // namespace avishape
