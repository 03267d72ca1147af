#include "avishape/fitting.hpp"

#include "avishape/metrics.hpp"
#include "avishape/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

namespace avishape {

Points3 ShapeSpace::shape(const Eigen::VectorXd& beta) const {
  if (beta.size() != components.cols()) throw InvalidInput("shape space: coefficient count mismatch");
  Eigen::VectorXd s = mean;
  if (beta.size() > 0) s += components * beta;
  return unflatten(s);
}

ShapeSpace ShapeSpace::fixed(const Points3& rest) {
  ShapeSpace s;
  s.mean = flat(rest);
  s.components = Eigen::MatrixXd::Zero(s.mean.size(), 0);
  s.variances = Eigen::VectorXd::Zero(0);
  return s;
}

std::vector<FitStage> default_align_stages() {
  return {
      {"camera", {"theta_root", "gamma"}, false, 2.0, 60, Algorithm::lbfgs, 0.05},
      {"pose", {"theta_root", "theta_body", "alpha", "gamma"}, false, 1.0, 120, Algorithm::lbfgs, 0.05},
      {"silhouette", {"theta_root", "theta_body", "alpha", "gamma", "kappa"}, true, 0.5, 120, Algorithm::lbfgs, 0.02},
      {"refine", {"theta_root", "theta_body", "alpha", "gamma", "kappa"}, true, 0.25, 80, Algorithm::lbfgs, 0.01},
  };
}

std::vector<FitStage> default_fit_stages() {
  auto stages = default_align_stages();
  stages.push_back(
      {"shape", {"theta_root", "theta_body", "alpha", "gamma", "kappa", "beta"}, true, 0.5, 120, Algorithm::lbfgs, 0.02});
  stages.push_back({"shape-refine", {"theta_root", "theta_body", "alpha", "gamma", "kappa", "beta"}, true, 0.25, 80,
                    Algorithm::lbfgs, 0.01});
  return stages;
}

void FitConfig::validate() const {
  weights.validate();
  if (stages.empty()) throw InvalidInput("fit config: no stages");
  for (const auto& s : stages) {
    if (s.iters < 0) throw InvalidInput("fit config: stage '" + s.name + "' has negative iterations");
    if (!(s.step > 0.0)) throw InvalidInput("fit config: stage '" + s.name + "' step must be positive");
    if (!(s.sigma > 0.0)) throw InvalidInput("fit config: stage '" + s.name + "' sigma must be positive");
  }
  if (!(cull_sigmas > 0.0)) throw InvalidInput("fit config: cull_sigmas must be positive");
  if (!(w_beta >= 0.0)) throw InvalidInput("fit config: w_beta must be nonnegative");
}

void ShapeFitConfig::validate() const {
  weights.validate();
  if (iters < 0) throw InvalidInput("shape fit config: iterations must be nonnegative");
  if (!(step > 0.0)) throw InvalidInput("shape fit config: step must be positive");
  if (sigmas.empty()) throw InvalidInput("shape fit config: no sigma levels");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw InvalidInput("shape fit config: sigma must be positive");
  }
  if (!use_keypoints && !use_mask) throw InvalidInput("shape fit config: no data term enabled");
}

void score_fit(const TemplateModel& tmpl, const Camera& camera, const AnnotatedInstance& instance,
               const PoseParams& params, const Points3& rest, double pck_threshold, double& pck_out, double& iou_out) {
  const PosedMesh mesh = pose_mesh(tmpl, params, rest);
  pck_out = pck(project(camera, keypoint_positions(tmpl, mesh.vertices)), instance.keypoints, instance.visible,
                instance.bbox, pck_threshold);
  iou_out = iou(rasterize_hard(mesh, camera), instance.mask);
}

namespace {

constexpr double kMinScale = 0.05;

// Pose (+ coefficient) objective of one instance.
class PoseObjective : public Objective {
 public:
  PoseObjective(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera, const ShapeSpace& space,
                const AnnotatedInstance& instance, const FitConfig& config)
      : tmpl_(tmpl), prior_(prior), camera_(camera), space_(space), inst_(instance), cfg_(config) {
    opts_.cull_sigmas = config.cull_sigmas;
    root_ = tmpl.root_joint();
  }

  void set_stage(const FitStage& s) {
    opts_.use_keypoints = true;
    opts_.use_mask = s.use_mask;
    opts_.sigma = s.sigma;
  }

  ParamVector pack(const PoseParams& p, const Eigen::VectorXd& beta) const {
    ParamVector x;
    x.add_block("theta_root", p.theta.segment<3>(3 * root_));
    Eigen::VectorXd body(3 * (tmpl_.num_joints() - 1));
    for (int j = 0, o = 0; j < tmpl_.num_joints(); ++j) {
      if (j == root_) continue;
      body.segment<3>(3 * o++) = p.theta.segment<3>(3 * j);
    }
    x.add_block("theta_body", body);
    x.add_block("alpha", p.alpha);
    x.add_block("gamma", p.gamma);
    x.add_block("kappa", p.kappa);
    if (space_.rank() > 0) x.add_block("beta", beta);
    return x;
  }

  PoseParams unpack(const ParamVector& x) const {
    PoseParams p = PoseParams::neutral(tmpl_.num_joints());
    p.theta.segment<3>(3 * root_) = x.segment("theta_root");
    const auto body = x.segment("theta_body");
    for (int j = 0, o = 0; j < tmpl_.num_joints(); ++j) {
      if (j == root_) continue;
      p.theta.segment<3>(3 * j) = body.segment<3>(3 * o++);
    }
    p.alpha = x.segment("alpha");
    p.gamma = x.segment("gamma");
    p.kappa = x.segment("kappa");
    return p;
  }

  Eigen::VectorXd beta(const ParamVector& x) const {
    return space_.rank() > 0 ? Eigen::VectorXd(x.segment("beta")) : Eigen::VectorXd(0);
  }

  double compute(const ParamVector& x, Eigen::VectorXd* grad, TermBreakdown* terms) override {
    const PoseParams p = unpack(x);
    const Eigen::VectorXd b = beta(x);
    const Points3 rest = space_.shape(b);
    PoseGradient g;
    if (grad) g.reset(tmpl_.num_vertices(), tmpl_.num_joints());
    const DataTerms d = instance_data_energy(tmpl_, camera_, inst_, p, rest, cfg_.weights, opts_, grad ? &g : nullptr);
    const double pr = prior_energy(p, prior_, cfg_.weights.w_prior, grad ? &g.theta : nullptr, grad ? &g.alpha : nullptr);
    double ridge = 0.0;
    Eigen::VectorXd g_beta;
    if (space_.rank() > 0) {
      g_beta = Eigen::VectorXd::Zero(b.size());
      for (Eigen::Index c = 0; c < b.size(); ++c) {
        const double v = std::max(space_.variances[c], 1e-12);
        ridge += cfg_.w_beta * b[c] * b[c] / v;
        g_beta[c] = 2.0 * cfg_.w_beta * b[c] / v;
      }
    }
    if (grad) {
      const ParamBlock& br = x.block("theta_root");
      grad->segment(br.offset, 3) = g.theta.segment<3>(3 * root_);
      const ParamBlock& bb = x.block("theta_body");
      for (int j = 0, o = 0; j < tmpl_.num_joints(); ++j) {
        if (j == root_) continue;
        grad->segment(bb.offset + 3 * o++, 3) = g.theta.segment<3>(3 * j);
      }
      grad->segment(x.block("alpha").offset, tmpl_.num_joints()) = g.alpha;
      grad->segment(x.block("gamma").offset, 3) = g.gamma;
      grad->segment(x.block("kappa").offset, 2) = g.kappa;
      if (space_.rank() > 0 && x.is_active("beta")) {
        grad->segment(x.block("beta").offset, b.size()) = space_.components.transpose() * flat(g.shape) + g_beta;
      }
    }
    if (terms) *terms = {{"keypoints", d.keypoints}, {"mask", d.mask}, {"prior", pr}, {"beta", ridge}};
    return d.total() + pr + ridge;
  }

  void project(ParamVector& x) const override {
    auto root = x.segment("theta_root");
    root = wrap_axis_angle(root);
    auto body = x.segment("theta_body");
    for (Eigen::Index o = 0; o + 3 <= body.size(); o += 3) body.segment<3>(o) = wrap_axis_angle(body.segment<3>(o));
    auto a = x.segment("alpha");
    a = a.cwiseMax(kMinScale);
    auto k = x.segment("kappa");
    k = k.cwiseMax(kMinScale);
  }

 private:
  const TemplateModel& tmpl_;
  const PosePrior& prior_;
  const Camera& camera_;
  const ShapeSpace& space_;
  const AnnotatedInstance& inst_;
  const FitConfig& cfg_;
  DataTermOptions opts_;
  int root_ = 0;
};

void append_trace(std::vector<TraceRow>& all, const std::vector<TraceRow>& stage) {
  const int base = all.empty() ? 0 : all.back().iter + 1;
  for (const auto& r : stage) all.push_back({base + r.iter, r.value, r.terms});
}

}  // namespace

FitResult fit_model_to_instance(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                                const ShapeSpace& space, const AnnotatedInstance& instance, const SynthDb& db,
                                const FitConfig& config, const std::optional<PoseParams>& init) {
  config.validate();
  camera.validate();
  instance.validate(camera.width, camera.height);
  if (space.mean.size() != 3 * tmpl.num_vertices()) throw InvalidInput("fit: shape space does not match template");
  if (instance.num_visible() == 0) throw InvalidInput("fit: instance '" + instance.id + "' has no visible keypoints");
  const PoseParams start = init ? *init : init_pose(instance.keypoints, instance.visible, instance.bbox, db);

  PoseObjective obj(tmpl, prior, camera, space, instance, config);
  ParamVector x = obj.pack(start, Eigen::VectorXd::Zero(space.rank()));
  FitResult r;
  for (const FitStage& stage : config.stages) {
    x.set_all_active(false);
    bool any = false;
    for (const auto& b : stage.blocks) {
      if (!x.has(b)) {
        if (b == "beta") continue;
        throw InvalidInput("fit: unknown block '" + b + "' in stage '" + stage.name + "'");
      }
      x.set_active(b, true);
      any = true;
    }
    if (!any || stage.iters == 0) continue;
    obj.set_stage(stage);
    OptimConfig oc;
    oc.algorithm = stage.algorithm;
    oc.max_iters = stage.iters;
    oc.step = stage.step;
    oc.tolerance = config.tolerance;
    try {
      MinimizeResult m = minimize(obj, x, oc);
      append_trace(r.trace, m.trace);
      x = std::move(m.params);
      r.energy = m.value;
    } catch (const DivergenceError& e) {
      x = e.last_finite;
      r.failed = true;
      r.failure = e.what();
      break;
    }
  }
  r.params = obj.unpack(x);
  r.beta = obj.beta(x);
  score_fit(tmpl, camera, instance, r.params, space.shape(r.beta), config.pck_threshold, r.pck, r.iou);
  if (!r.failed && (r.pck < config.fail_pck || r.iou < config.fail_iou)) {
    r.failed = true;
    r.failure = "alignment below thresholds";
  }
  return r;
}

FitResult align_instance(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                         const AnnotatedInstance& instance, const SynthDb& db, const FitConfig& config) {
  const ShapeSpace space = ShapeSpace::fixed(tmpl.vertices());
  return fit_model_to_instance(tmpl, prior, camera, space, instance, db, config);
}

// ---------------------------------------------------------------------------

namespace {

struct InstanceTerm {
  DataTerms data;
  Points3 grad_shape;
};

// Data terms of every instance for per-instance rest shapes, evaluated in
// parallel and reduced in index order by the caller.
std::vector<InstanceTerm> data_terms(const TemplateModel& tmpl, const Camera& camera,
                                     const std::vector<AnnotatedInstance>& instances,
                                     const std::vector<PoseParams>& poses, const std::vector<Points3>& rests,
                                     const ShapeFitConfig& cfg, double sigma, bool want_grad) {
  DataTermOptions opts;
  opts.use_keypoints = cfg.use_keypoints;
  opts.use_mask = cfg.use_mask;
  opts.sigma = sigma;
  opts.cull_sigmas = cfg.cull_sigmas;
  std::vector<InstanceTerm> out(instances.size());
  parallel_for(static_cast<int>(instances.size()), cfg.threads, [&](int i) {
    PoseGradient g;
    if (want_grad) g.reset(tmpl.num_vertices(), tmpl.num_joints());
    const Points3& rest = rests.size() == 1 ? rests[0] : rests[i];
    out[i].data = instance_data_energy(tmpl, camera, instances[i], poses[i], rest, cfg.weights, opts,
                                       want_grad ? &g : nullptr);
    if (want_grad) out[i].grad_shape = std::move(g.shape);
  });
  return out;
}

void check_instances(const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                     const TemplateModel& tmpl, const Camera& camera) {
  if (instances.size() != poses.size()) throw InvalidInput("shape fit: instance and pose counts differ");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    instances[i].validate(camera.width, camera.height);
    poses[i].validate(tmpl.num_joints());
  }
}

class MeanObjective : public Objective {
 public:
  MeanObjective(const TemplateModel& t, const Camera& c, const std::vector<AnnotatedInstance>& inst,
                const std::vector<PoseParams>& poses, const ShapeFitConfig& cfg)
      : t_(t), c_(c), inst_(inst), poses_(poses), cfg_(cfg) {}

  double sigma = 1.0;

  double compute(const ParamVector& x, Eigen::VectorXd* grad, TermBreakdown* terms) override {
    const Points3 disp = unflatten(x.segment("dv"));
    const Points3 rest = t_.vertices() + disp;
    const auto per = data_terms(t_, c_, inst_, poses_, {rest}, cfg_, sigma, grad != nullptr);
    double kp = 0.0, mask = 0.0;
    Points3 g = Points3::Zero(t_.num_vertices(), 3);
    for (const auto& p : per) {
      kp += p.data.keypoints;
      mask += p.data.mask;
      if (grad) g += p.grad_shape;
    }
    const SmoothnessTerms sm = smoothness_energy(disp, t_, cfg_.weights, grad ? &g : nullptr);
    if (grad) grad->segment(x.block("dv").offset, g.size()) = flat(g);
    if (terms) {
      *terms = {{"keypoints", kp}, {"mask", mask}, {"edge", sm.edge}, {"lap", sm.lap}, {"arap", sm.arap},
                {"sym", sm.sym}};
    }
    return kp + mask + sm.total();
  }

 private:
  const TemplateModel& t_;
  const Camera& c_;
  const std::vector<AnnotatedInstance>& inst_;
  const std::vector<PoseParams>& poses_;
  const ShapeFitConfig& cfg_;
};

class BasisObjective : public Objective {
 public:
  BasisObjective(const TemplateModel& t, const Camera& c, const std::vector<AnnotatedInstance>& inst,
                 const std::vector<PoseParams>& poses, const Eigen::VectorXd& dv, int k, const BasisConfig& cfg)
      : t_(t), c_(c), inst_(inst), poses_(poses), dv_(dv), k_(k), cfg_(cfg) {}

  double sigma = 1.0;

  static std::string beta_name(std::size_t i) { return "beta/" + std::to_string(i); }

  Eigen::Map<const Eigen::MatrixXd> basis(const ParamVector& x) const {
    const ParamBlock& b = x.block("V");
    return {x.values().data() + b.offset, dv_.size(), k_};
  }

  double compute(const ParamVector& x, Eigen::VectorXd* grad, TermBreakdown* terms) override {
    const auto V = basis(x);
    const std::size_t n = inst_.size();
    std::vector<Points3> rests(n);
    std::vector<Eigen::VectorXd> disp(n);
    for (std::size_t i = 0; i < n; ++i) {
      disp[i] = dv_ + V * x.segment(beta_name(i));
      rests[i] = t_.vertices() + unflatten(disp[i]);
    }
    const auto per = data_terms(t_, c_, inst_, poses_, rests, cfg_, sigma, grad != nullptr);
    double kp = 0.0, mask = 0.0;
    SmoothnessTerms sm_total;
    Eigen::MatrixXd gV;
    if (grad) gV = Eigen::MatrixXd::Zero(dv_.size(), k_);
    for (std::size_t i = 0; i < n; ++i) {
      kp += per[i].data.keypoints;
      mask += per[i].data.mask;
      // Smoothness per instance carries weight 1/n so that at beta = 0 the
      // objective equals the mean-stage objective.
      Points3 gsm;
      if (grad) gsm = Points3::Zero(t_.num_vertices(), 3);
      const SmoothnessTerms sm = smoothness_energy(unflatten(disp[i]), t_, cfg_.weights, grad ? &gsm : nullptr);
      sm_total.edge += sm.edge / n;
      sm_total.lap += sm.lap / n;
      sm_total.arap += sm.arap / n;
      sm_total.sym += sm.sym / n;
      if (grad) {
        const Eigen::VectorXd gs = flat(per[i].grad_shape) + flat(gsm) / static_cast<double>(n);
        gV += gs * x.segment(beta_name(i)).transpose();
        grad->segment(x.block(beta_name(i)).offset, k_) = V.transpose() * gs;
      }
    }
    double ortho = 0.0;
    if (cfg_.weights.w_ortho > 0.0) {
      Eigen::MatrixXd go;
      if (grad) go = Eigen::MatrixXd::Zero(dv_.size(), k_);
      ortho = cfg_.weights.w_ortho * ortho_energy(V, grad ? &go : nullptr);
      if (grad) gV += cfg_.weights.w_ortho * go;
    }
    if (grad) {
      grad->segment(x.block("V").offset, gV.size()) = Eigen::Map<const Eigen::VectorXd>(gV.data(), gV.size());
    }
    if (terms) {
      *terms = {{"keypoints", kp},         {"mask", mask},         {"edge", sm_total.edge}, {"lap", sm_total.lap},
                {"arap", sm_total.arap},   {"sym", sm_total.sym},  {"ortho", ortho}};
    }
    return kp + mask + sm_total.total() + ortho;
  }

 private:
  const TemplateModel& t_;
  const Camera& c_;
  const std::vector<AnnotatedInstance>& inst_;
  const std::vector<PoseParams>& poses_;
  const Eigen::VectorXd& dv_;
  int k_;
  const BasisConfig& cfg_;
};

std::vector<double> ious(const TemplateModel& tmpl, const Camera& camera,
                         const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                         const std::vector<Points3>& rests) {
  std::vector<double> out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Points3& rest = rests.size() == 1 ? rests[0] : rests[i];
    out.push_back(iou(rasterize_hard(pose_mesh(tmpl, poses[i], rest), camera), instances[i].mask));
  }
  return out;
}

// Runs one Adam pass per sigma level, concatenating the traces.
template <class Obj>
MinimizeResult coarse_to_fine(Obj& obj, ParamVector x, const ShapeFitConfig& c) {
  MinimizeResult out;
  for (double s : c.sigmas) {
    obj.sigma = s;
    OptimConfig oc;
    oc.algorithm = Algorithm::adam;
    oc.max_iters = c.iters;
    oc.step = c.step;
    oc.tolerance = c.tolerance;
    MinimizeResult m = minimize(obj, std::move(x), oc);
    append_trace(out.trace, m.trace);
    x = std::move(m.params);
    out.value = m.value;
    out.iterations += m.iterations;
  }
  out.params = std::move(x);
  return out;
}


}  // namespace

MeanFitResult fit_species_mean(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const ShapeFitConfig& config) {
  config.validate();
  camera.validate();
  if (instances.size() < 2) throw InvalidInput("fit_species_mean: need at least 2 instances");
  check_instances(instances, poses, tmpl, camera);
  MeanObjective obj(tmpl, camera, instances, poses, config);
  ParamVector x;
  x.add_block("dv", Eigen::VectorXd::Zero(3 * tmpl.num_vertices()));
  MinimizeResult m = coarse_to_fine(obj, x, config);
  MeanFitResult r;
  r.dv = m.params.segment("dv");
  r.trace = std::move(m.trace);
  r.iou_before = ious(tmpl, camera, instances, poses, {tmpl.vertices()});
  r.iou_after = ious(tmpl, camera, instances, poses, {tmpl.vertices() + unflatten(r.dv)});
  return r;
}

BasisFitResult fit_individuals(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const Eigen::VectorXd& dv, const BasisConfig& config) {
  config.validate();
  camera.validate();
  check_instances(instances, poses, tmpl, camera);
  if (config.k < 1) throw InvalidInput("fit_individuals: K must be at least 1");
  if (config.k >= static_cast<int>(instances.size())) {
    throw InvalidInput("fit_individuals: K must be smaller than the instance count");
  }
  if (dv.size() != 3 * tmpl.num_vertices()) throw InvalidInput("fit_individuals: dv must have 3N entries");
  const Eigen::Index n3 = dv.size();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, config.init_scale * tmpl.body_length());
  Eigen::VectorXd v0(n3 * config.k);
  for (auto& e : v0) e = normal(rng);

  BasisObjective obj(tmpl, camera, instances, poses, dv, config.k, config);
  ParamVector x;
  x.add_block("V", v0);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    x.add_block(BasisObjective::beta_name(i), Eigen::VectorXd::Zero(config.k), true, config.beta_step_scale);
  }
  MinimizeResult m = coarse_to_fine(obj, x, config);
  BasisFitResult r;
  r.basis = obj.basis(m.params);
  std::vector<Points3> rests;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    r.betas.push_back(m.params.segment(BasisObjective::beta_name(i)));
    rests.push_back(tmpl.vertices() + unflatten(Eigen::VectorXd(dv + r.basis * r.betas.back())));
  }
  r.trace = std::move(m.trace);
  r.iou_mean_only = ious(tmpl, camera, instances, poses, {tmpl.vertices() + unflatten(dv)});
  r.iou_after = ious(tmpl, camera, instances, poses, rests);
  return r;
}

Pca relearn_pca(const Eigen::MatrixXd& shapes, int k) { return fit_pca(shapes, k); }

// ---------------------------------------------------------------------------

namespace {

template <class Obj>
ObjectiveProbe probe(std::shared_ptr<Obj> obj, ParamVector x) {
  ObjectiveProbe p;
  p.x = x.values();
  p.f = [obj, x](const Eigen::VectorXd& v, Eigen::VectorXd* grad) mutable {
    if (v.size() != x.size()) throw InvalidInput("objective probe: wrong parameter count");
    x.values() = v;
    if (grad) grad->setZero(v.size());
    return obj->compute(x, grad, nullptr);
  };
  return p;
}

}  // namespace

ObjectiveProbe pose_objective(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera,
                              const ShapeSpace& space, const AnnotatedInstance& instance, const FitConfig& config,
                              const FitStage& stage, const PoseParams& params, const Eigen::VectorXd& beta) {
  auto obj = std::make_shared<PoseObjective>(tmpl, prior, camera, space, instance, config);
  obj->set_stage(stage);
  return probe(obj, obj->pack(params, beta));
}

ObjectiveProbe mean_objective(const TemplateModel& tmpl, const Camera& camera,
                              const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                              const ShapeFitConfig& config, double sigma, const Eigen::VectorXd& dv) {
  check_instances(instances, poses, tmpl, camera);
  auto obj = std::make_shared<MeanObjective>(tmpl, camera, instances, poses, config);
  obj->sigma = sigma;
  ParamVector x;
  x.add_block("dv", dv);
  return probe(obj, x);
}

ObjectiveProbe basis_objective(const TemplateModel& tmpl, const Camera& camera,
                               const std::vector<AnnotatedInstance>& instances, const std::vector<PoseParams>& poses,
                               const Eigen::VectorXd& dv, const BasisConfig& config, double sigma,
                               const Eigen::MatrixXd& basis, const std::vector<Eigen::VectorXd>& betas) {
  check_instances(instances, poses, tmpl, camera);
  if (betas.size() != instances.size()) throw InvalidInput("basis objective: one beta per instance");
  const int k = static_cast<int>(basis.cols());
  auto obj = std::make_shared<BasisObjective>(tmpl, camera, instances, poses, dv, k, config);
  obj->sigma = sigma;
  ParamVector x;
  x.add_block("V", Eigen::Map<const Eigen::VectorXd>(basis.data(), basis.size()));
  for (std::size_t i = 0; i < betas.size(); ++i) x.add_block(BasisObjective::beta_name(i), betas[i]);
  return probe(obj, x);
}

// ---------------------------------------------------------------------------

ShapeSpace SpeciesModel::mean_space(const TemplateModel& tmpl) const {
  if (dv.size() != 3 * tmpl.num_vertices()) throw InvalidInput("species model: dv does not match template");
  return ShapeSpace::fixed(tmpl.vertices() + unflatten(dv));
}

ShapeSpace SpeciesModel::shape_space(const TemplateModel& tmpl) const {
  if (pca.rank() == 0) return mean_space(tmpl);
  if (pca.mean.size() != 3 * tmpl.num_vertices()) throw InvalidInput("species model: PCA does not match template");
  return {pca.mean, pca.components, pca.variances};
}

Points3 normalize_shape(const TemplateModel& tmpl, const Points3& shape) {
  const KeypointDef& a = tmpl.keypoints()[tmpl.keypoint_index("beak_tip")];
  const KeypointDef& b = tmpl.keypoints()[tmpl.keypoint_index("tail_tip")];
  const double len = (keypoint_position(a, shape) - keypoint_position(b, shape)).norm();
  if (!(len > 0.0)) throw InvalidInput("normalize shape: body length is zero");
  const Eigen::RowVector3d c = shape.colwise().mean();
  return (shape.rowwise() - c) / len;
}

ShapeSpace MultiSpeciesModel::shape_space(const TemplateModel& tmpl) const {
  if (pca.mean.size() != 3 * tmpl.num_vertices()) throw InvalidInput("multi-species model: does not match template");
  ShapeSpace s;
  if (!normalized) {
    s = {pca.mean, pca.components, pca.variances};
    return s;
  }
  const double L = tmpl.body_length();
  const Eigen::RowVector3d c = tmpl.vertices().colwise().mean();
  Points3 mean = unflatten(pca.mean) * L;
  mean.rowwise() += c;
  s.mean = flat(mean);
  s.components = pca.components;
  s.variances = pca.variances * (L * L);
  return s;
}

MultiSpeciesModel build_multispecies(const TemplateModel& tmpl, const std::vector<SpeciesModel>& models,
                                     bool normalize, int rank, std::vector<std::string>* warnings) {
  const int s = static_cast<int>(models.size());
  if (s < 2) throw InvalidInput("build_multispecies: need at least 2 species");
  MultiSpeciesModel out;
  out.template_hash = tmpl.hash();
  out.normalized = normalize;
  Eigen::MatrixXd samples(s, 3 * tmpl.num_vertices());
  for (int i = 0; i < s; ++i) {
    const SpeciesModel& m = models[i];
    if (!m.template_hash.empty() && m.template_hash != tmpl.hash()) {
      throw InvalidInput("build_multispecies: species '" + m.species + "' was fitted on a different template");
    }
    if (m.dv.size() != 3 * tmpl.num_vertices()) throw InvalidInput("build_multispecies: dv does not match template");
    Points3 shape = tmpl.vertices() + unflatten(m.dv);
    if (normalize) shape = normalize_shape(tmpl, shape);
    samples.row(i) = flat(shape).transpose();
    out.species.push_back(m.species);
  }
  if (rank < 0) rank = s - 1;
  if (rank > s - 1) {
    if (warnings) {
      warnings->push_back("rank " + std::to_string(rank) + " clamped to " + std::to_string(s - 1) +
                          " (species count - 1)");
    }
    rank = s - 1;
  }
  out.pca = fit_pca(samples, rank);
  out.coefficients.resize(s, out.pca.rank());
  for (int i = 0; i < s; ++i) out.coefficients.row(i) = out.pca.project(samples.row(i).transpose()).transpose();
  return out;
}

}  // namespace avishape
