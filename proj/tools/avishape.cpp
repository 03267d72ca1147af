#include "avishape/fitting.hpp"
#include "avishape/io.hpp"
#include "avishape/metrics.hpp"
#include "avishape/parallel.hpp"
#include "avishape/phylo.hpp"
#include "avishape/synth_db.hpp"
#include "avishape/synthetic_data.hpp"
#include "avishape/synthetic_template.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

using namespace avishape;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 1;
  int threads = 1;
  bool verbose = false;
  KeyValues kv;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log(const Globals& g, const std::string& msg) {
  if (g.verbose) std::cerr << msg << "\n";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Inputs shared by the stages that read a dataset.
struct Dataset {
  fs::path manifest_path;
  Manifest manifest;
  TemplateModel tmpl;
  PosePrior prior;
};

Dataset load_dataset(const fs::path& manifest, const std::string& template_arg, const std::string& prior_arg) {
  const fs::path dir = manifest.parent_path();
  const fs::path tpath = template_arg.empty() ? dir / "template.obj" : fs::path(template_arg);
  const fs::path ppath = prior_arg.empty() ? dir / "prior.json" : fs::path(prior_arg);
  Manifest m = read_manifest(manifest);
  TemplateModel tmpl(read_template(tpath));
  check_template_hash(tmpl.hash(), m.template_hash, "manifest " + manifest.string());
  PosePrior prior = read_prior(ppath);
  if (prior.num_joints() != tmpl.num_joints()) throw InvalidInput("prior joint count differs from the template");
  return {manifest, std::move(m), std::move(tmpl), std::move(prior)};
}

FitConfig fit_config(const Globals& g) {
  FitConfig c;
  c.weights = energy_weights_from(g.kv, c.weights);
  c.fail_pck = kv_double(g.kv, "fail_pck", c.fail_pck);
  c.fail_iou = kv_double(g.kv, "fail_iou", c.fail_iou);
  c.w_beta = kv_double(g.kv, "w_beta", c.w_beta);
  c.tolerance = kv_double(g.kv, "fit_tolerance", c.tolerance);
  c.validate();
  return c;
}

void shape_config(const Globals& g, ShapeFitConfig& c, const std::string& prefix) {
  c.weights = energy_weights_from(g.kv, c.weights);
  c.iters = kv_int(g.kv, prefix + "_iters", c.iters);
  c.step = kv_double(g.kv, prefix + "_step", c.step);
  c.sigmas = kv_doubles(g.kv, prefix + "_sigmas", c.sigmas);
  c.threads = g.threads;
  c.validate();
}

SynthDb make_db(const Globals& g, const Dataset& d) {
  return build_synth_db(d.tmpl, d.prior, d.manifest.camera, kv_int(g.kv, "db_size", 2000), g.seed);
}

fs::path params_path(const fs::path& dir, const std::string& id) { return dir / (id + ".json"); }

// Params for every manifest instance, in manifest order.
std::vector<ParamsFile> load_params(const fs::path& dir, const Manifest& m) {
  std::vector<ParamsFile> out;
  for (const auto& inst : m.instances) {
    ParamsFile p = read_params(params_path(dir, inst.id));
    if (p.id != inst.id) throw InvalidInput(params_path(dir, inst.id).string() + ": id '" + p.id + "' does not match");
    out.push_back(std::move(p));
  }
  return out;
}

// Non-failed instances with their poses.
void kept_instances(const Dataset& d, const std::vector<ParamsFile>& params, std::vector<AnnotatedInstance>& inst,
                    std::vector<PoseParams>& poses, std::vector<std::string>& ids) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].failed) continue;
    params[i].params.validate(d.tmpl.num_joints());
    inst.push_back(d.manifest.instances[i]);
    poses.push_back(params[i].params);
    ids.push_back(params[i].id);
  }
}

// Shape space of any model file, checked against the template.
ShapeSpace model_space(const fs::path& path, const TemplateModel& tmpl, bool mean_only) {
  const std::string kind = model_kind(path);
  if (kind == "species") {
    const SpeciesModel m = read_species_model(path);
    check_template_hash(tmpl.hash(), m.template_hash, "model " + path.string());
    if (m.dv.size() != 3 * tmpl.num_vertices()) throw InvalidInput(path.string() + ": dv size differs from the template");
    return mean_only ? m.mean_space(tmpl) : m.shape_space(tmpl);
  }
  if (kind == "multispecies") {
    MultiSpeciesModel m = read_multispecies_model(path);
    check_template_hash(tmpl.hash(), m.template_hash, "model " + path.string());
    if (mean_only) m.pca.components.resize(m.pca.mean.size(), 0), m.pca.variances.resize(0);
    return m.shape_space(tmpl);
  }
  throw InvalidInput(path.string() + ": unknown model kind '" + kind + "'");
}

std::string report_csv(const std::vector<ParamsFile>& ps) {
  CsvTable t;
  t.header = {"id", "pck", "iou", "failed", "failure"};
  for (const auto& p : ps) {
    std::string why = p.failure;
    std::replace(why.begin(), why.end(), ',', ';');
    t.rows.push_back({p.id, fmt(p.pck), fmt(p.iou), p.failed ? "1" : "0", why});
  }
  return format_csv(t);
}

void summary(const std::string& what, const std::vector<ParamsFile>& ps) {
  double pck = 0.0, iou = 0.0;
  int n = 0, failed = 0;
  for (const auto& p : ps) {
    failed += p.failed;
    pck += p.pck;
    iou += p.iou;
    ++n;
  }
  std::cout << what << ": instances " << n << " failed " << failed << " mean_pck05 " << fmt6(n ? pck / n : 0.0)
            << " mean_iou " << fmt6(n ? iou / n : 0.0) << "\n";
}

// ---------------------------------------------------------------------------

void cmd_synth(const Globals& g, const std::string& spec_path, const fs::path& out, const std::string& template_arg) {
  KeyValues kv = g.kv;
  if (!spec_path.empty()) {
    for (const auto& [k, v] : read_key_values(spec_path)) kv[k] = v;
  }
  if (!kv.count("seed")) kv["seed"] = std::to_string(g.seed);
  const SyntheticSpeciesSpec spec = synthetic_spec_from(kv);
  TemplateModel tmpl = template_arg.empty()
                           ? make_synthetic_bird({kv_double(kv, "template_resolution", 0.7)})
                           : TemplateModel(read_template(template_arg));
  const PosePrior prior = kv.count("prior") ? read_prior(kv.at("prior")) : make_synthetic_bird_prior(tmpl);
  log(g, "generating " + std::to_string(spec.instances) + " instances");
  const SyntheticCollection col = generate_synthetic_collection(tmpl, prior, spec);
  write_template(out / "template.obj", tmpl.data());
  write_prior(out / "prior.json", prior);
  write_manifest(out / "manifest.json", {tmpl.hash(), col.camera, col.instances});
  std::vector<std::string> ids;
  for (const auto& i : col.instances) ids.push_back(i.id);
  write_ground_truth(out / "truth" / "truth.json", col.truth, ids);
  std::cout << "synth: wrote " << col.instances.size() << " instances to " << out.string() << "\n";
}

void cmd_align(const Globals& g, const fs::path& manifest, const std::string& tmpl_arg, const std::string& prior_arg,
               const fs::path& out) {
  const Dataset d = load_dataset(manifest, tmpl_arg, prior_arg);
  const FitConfig cfg = fit_config(g);
  const SynthDb db = make_db(g, d);
  const int n = static_cast<int>(d.manifest.instances.size());
  std::vector<ParamsFile> res(n);
  parallel_for(n, g.threads, [&](int i) {
    const auto& inst = d.manifest.instances[i];
    const FitResult r = align_instance(d.tmpl, d.prior, d.manifest.camera, inst, db, cfg);
    res[i] = {inst.id, r.params, r.beta, r.pck, r.iou, r.failed, r.failure};
  });
  for (const auto& p : res) write_params(params_path(out / "params", p.id), p);
  write_atomic(out / "report.csv", report_csv(res));
  summary("align", res);
}

void cmd_mean(const Globals& g, const fs::path& manifest, const std::string& tmpl_arg, const std::string& prior_arg,
              const fs::path& params_dir, const fs::path& out) {
  const Dataset d = load_dataset(manifest, tmpl_arg, prior_arg);
  std::vector<AnnotatedInstance> inst;
  std::vector<PoseParams> poses;
  std::vector<std::string> ids;
  kept_instances(d, load_params(params_dir, d.manifest), inst, poses, ids);
  ShapeFitConfig cfg;
  shape_config(g, cfg, "mean");
  const MeanFitResult r = fit_species_mean(d.tmpl, d.manifest.camera, inst, poses, cfg);
  SpeciesModel m;
  m.species = inst.empty() ? "" : inst.front().species;
  m.template_hash = d.tmpl.hash();
  m.dv = r.dv;
  m.basis.resize(r.dv.size(), 0);
  m.instance_ids = ids;
  m.betas.resize(static_cast<Eigen::Index>(ids.size()), 0);
  m.pca.mean = flat(d.tmpl.vertices()) + r.dv;
  m.pca.components.resize(r.dv.size(), 0);
  m.pca.variances.resize(0);
  write_species_model(out, m);
  CsvTable t;
  t.header = {"id", "iou_before", "iou_after"};
  double b = 0.0, a = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    t.rows.push_back({ids[i], fmt(r.iou_before[i]), fmt(r.iou_after[i])});
    b += r.iou_before[i];
    a += r.iou_after[i];
  }
  fs::path rep = out;
  rep.replace_extension(".report.csv");
  write_atomic(rep, format_csv(t));
  fs::path tr = out;
  tr.replace_extension(".trace.csv");
  write_atomic(tr, trace_csv(r.trace));
  std::cout << "mean: instances " << ids.size() << " mean_iou_before " << fmt6(b / ids.size()) << " mean_iou_after "
            << fmt6(a / ids.size()) << "\n";
}

void cmd_basis(const Globals& g, const fs::path& manifest, const std::string& tmpl_arg, const std::string& prior_arg,
               const fs::path& params_dir, const fs::path& mean_path, int k, const fs::path& out) {
  const Dataset d = load_dataset(manifest, tmpl_arg, prior_arg);
  const SpeciesModel mean = read_species_model(mean_path);
  check_template_hash(d.tmpl.hash(), mean.template_hash, "model " + mean_path.string());
  std::vector<AnnotatedInstance> inst;
  std::vector<PoseParams> poses;
  std::vector<std::string> ids;
  kept_instances(d, load_params(params_dir, d.manifest), inst, poses, ids);
  BasisConfig cfg;
  shape_config(g, cfg, "basis");
  cfg.k = k;
  cfg.seed = g.seed;
  cfg.init_scale = kv_double(g.kv, "basis_init_scale", cfg.init_scale);
  cfg.beta_step_scale = kv_double(g.kv, "beta_step_scale", cfg.beta_step_scale);
  const BasisFitResult r = fit_individuals(d.tmpl, d.manifest.camera, inst, poses, mean.dv, cfg);
  SpeciesModel m = mean;
  m.basis = r.basis;
  m.instance_ids = ids;
  m.betas.resize(static_cast<Eigen::Index>(ids.size()), k);
  Eigen::MatrixXd shapes(static_cast<Eigen::Index>(ids.size()), mean.dv.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    m.betas.row(static_cast<Eigen::Index>(i)) = r.betas[i].transpose();
    shapes.row(static_cast<Eigen::Index>(i)) = (flat(d.tmpl.vertices()) + mean.dv + r.basis * r.betas[i]).transpose();
  }
  m.pca = relearn_pca(shapes, k);
  write_species_model(out, m);
  fs::path tr = out;
  tr.replace_extension(".trace.csv");
  write_atomic(tr, trace_csv(r.trace));
  double b = 0.0, a = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    b += r.iou_mean_only[i];
    a += r.iou_after[i];
  }
  std::cout << "basis: instances " << ids.size() << " rank " << m.pca.rank() << " mean_iou_mean_only "
            << fmt6(b / ids.size()) << " mean_iou_after " << fmt6(a / ids.size()) << "\n";
}

void cmd_aves(const Globals& g, const std::vector<std::string>& models, const std::string& tmpl_path, int rank,
              bool no_normalize, const fs::path& out) {
  const TemplateModel tmpl(read_template(tmpl_path));
  std::vector<SpeciesModel> ms;
  for (const auto& p : models) ms.push_back(read_species_model(p));
  std::vector<std::string> warnings;
  const MultiSpeciesModel m = build_multispecies(tmpl, ms, !no_normalize, rank, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  write_multispecies_model(out, m);
  log(g, "wrote " + out.string());
  std::cout << "aves: species " << m.species.size() << " rank " << m.pca.rank() << "\n";
}

void cmd_fit(const Globals& g, const fs::path& manifest, const std::string& tmpl_arg, const std::string& prior_arg,
             const std::string& model, bool mean_only, const fs::path& out) {
  const Dataset d = load_dataset(manifest, tmpl_arg, prior_arg);
  const ShapeSpace space = model.empty() ? ShapeSpace::fixed(d.tmpl.vertices()) : model_space(model, d.tmpl, mean_only);
  FitConfig cfg = fit_config(g);
  if (space.rank() > 0) cfg.stages = default_fit_stages();
  const SynthDb db = make_db(g, d);
  const int n = static_cast<int>(d.manifest.instances.size());
  std::vector<ParamsFile> res(n);
  parallel_for(n, g.threads, [&](int i) {
    const auto& inst = d.manifest.instances[i];
    const FitResult r = fit_model_to_instance(d.tmpl, d.prior, d.manifest.camera, space, inst, db, cfg);
    res[i] = {inst.id, r.params, r.beta, r.pck, r.iou, r.failed, r.failure};
  });
  for (const auto& p : res) write_params(params_path(out / "params", p.id), p);
  write_atomic(out / "metrics.csv", report_csv(res));
  summary("fit", res);
}

void cmd_eval(const Globals&, const fs::path& manifest, const std::string& tmpl_arg, const std::string& prior_arg,
              const fs::path& params_dir, const std::string& model, bool mean_only, const std::string& out) {
  const Dataset d = load_dataset(manifest, tmpl_arg, prior_arg);
  const ShapeSpace space = model.empty() ? ShapeSpace::fixed(d.tmpl.vertices()) : model_space(model, d.tmpl, mean_only);
  std::vector<ParamsFile> ps = load_params(params_dir, d.manifest);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i].params.validate(d.tmpl.num_joints());
    Eigen::VectorXd beta = ps[i].beta;
    if (beta.size() != space.rank()) {
      if (beta.size() != 0) throw InvalidInput(ps[i].id + ": beta has " + std::to_string(beta.size()) + " entries, model rank " + std::to_string(space.rank()));
      beta = Eigen::VectorXd::Zero(space.rank());
    }
    score_fit(d.tmpl, d.manifest.camera, d.manifest.instances[i], ps[i].params, space.shape(beta), 0.05, ps[i].pck,
              ps[i].iou);
  }
  if (!out.empty()) write_atomic(out, report_csv(ps));
  summary("eval", ps);
}

void cmd_analyze(const Globals&, const std::string& model, const std::string& traits_path, const fs::path& tree_path,
                 int dims, const fs::path& out) {
  const PhyloTree tree = parse_newick(read_text(tree_path));
  std::vector<std::string> species;
  Eigen::MatrixXd traits;
  if (!model.empty()) {
    const MultiSpeciesModel m = read_multispecies_model(model);
    species = m.species;
    traits = m.coefficients;
  } else if (!traits_path.empty()) {
    read_traits_csv(traits_path, species, traits);
  } else {
    throw UsageError("analyze needs --model or --traits");
  }
  if (dims > 0 && dims < traits.cols()) traits = traits.leftCols(dims).eval();
  const Eigen::MatrixXd y = traits_in_leaf_order(tree, species, traits);
  const std::vector<std::string> leaves = tree.leaf_names();
  const Eigen::MatrixXd e = embed_2d(y);
  write_traits_csv(out / "embedding.csv", leaves, e, {"x", "y"});
  write_atomic(out / "embedding.svg", scatter_svg(leaves, e, "shape space (top-2 principal axes)"));

  CsvTable lt;
  lt.header = {"traits", "dim", "lambda", "log_likelihood", "log_likelihood_0", "p_value"};
  auto run = [&](const std::string& name, const Eigen::MatrixXd& t) {
    const LambdaResult r = pagels_lambda(tree, t);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    for (std::size_t k = 0; k < r.per_dim.size(); ++k) {
      const auto& f = r.per_dim[k];
      lt.rows.push_back({name, std::to_string(k), fmt(f.lambda), fmt(f.log_likelihood), fmt(f.log_likelihood_0), fmt(f.p_value)});
    }
    lt.rows.push_back({name, "pooled", fmt(r.mean_lambda), "", "", fmt(r.combined_p)});
    std::cout << "lambda " << name << ": mean " << fmt6(r.mean_lambda) << " combined_p " << r.combined_p << "\n";
  };
  run("embedding", e);
  run("components", y);
  write_atomic(out / "lambda.csv", format_csv(lt));

  const Eigen::MatrixXd anc = ancestral_states(tree, y);
  const auto internal = tree.internal_nodes();
  std::vector<std::string> names;
  for (int nd : internal) names.push_back(tree.nodes[nd].name.empty() ? "node" + std::to_string(nd) : tree.nodes[nd].name);
  write_traits_csv(out / "ancestral.csv", names, anc);
  std::cout << "analyze: species " << leaves.size() << " dims " << y.cols() << "\n";
}

void cmd_export(const Globals&, const std::string& tmpl_path, const std::string& model, const std::string& params,
                const std::string& mode, int component, double stdev, const fs::path& out) {
  const TemplateModel tmpl(read_template(tmpl_path));
  const ShapeSpace space = model.empty() ? ShapeSpace::fixed(tmpl.vertices()) : model_space(model, tmpl, false);
  auto posed = [&](const Eigen::VectorXd& beta) -> Points3 {
    const Points3 rest = space.shape(beta);
    if (params.empty()) return rest;
    const ParamsFile p = read_params(params);
    p.params.validate(tmpl.num_joints());
    return pose_mesh(tmpl, p.params, rest).vertices;
  };
  auto with_ext = [&](const std::string& suffix) {
    fs::path p = out;
    p.replace_extension();
    p += suffix + ".obj";
    return p;
  };
  if (mode == "mesh") {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(space.rank());
    if (!params.empty()) {
      const ParamsFile p = read_params(params);
      if (p.beta.size() == space.rank()) beta = p.beta;
    }
    write_obj(with_ext(""), posed(beta), tmpl.faces());
    std::cout << "export: wrote " << with_ext("").string() << "\n";
  } else if (mode == "pca") {
    if (component < 0 || component >= space.rank()) {
      throw InvalidInput("component " + std::to_string(component) + " outside model rank " + std::to_string(space.rank()));
    }
    if (!(stdev >= 0.0)) throw InvalidInput("--std must be nonnegative");
    for (int sgn : {+1, -1}) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(space.rank());
      beta[component] = sgn * stdev * std::sqrt(space.variances[component]);
      const fs::path p = with_ext("_pc" + std::to_string(component) + (sgn > 0 ? "_plus" : "_minus"));
      write_obj(p, posed(beta), tmpl.faces());
      std::cout << "export: wrote " << p.string() << "\n";
    }
  } else {
    throw UsageError("--mode must be mesh or pca");
  }
}

int fail(const std::string& code, const std::string& msg) {
  std::string m = msg;
  std::replace(m.begin(), m.end(), '\n', ' ');
  std::cerr << "error: " << code << ": " << m << "\n";
  return code == "usage" ? 2 : code == "invalid_input" ? 3 : code == "numerical" ? 4 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Articulated bird shape fitting and shape-space analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "key=value configuration file");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--verbose", g.verbose, "progress on stderr");

  std::string manifest, tmpl, prior, out, params, model, spec, mode = "mesh", traits, tree;
  std::vector<std::string> models;
  int k = 2, rank = -1, component = 0, dims = 0;
  double stdev = 1.0;
  bool mean_only = false, no_normalize = false;

  auto data_opts = [&](CLI::App* c) {
    c->add_option("--manifest", manifest, "dataset manifest")->required();
    c->add_option("--template", tmpl, "template OBJ (default: template.obj beside the manifest)");
    c->add_option("--prior", prior, "pose prior (default: prior.json beside the manifest)");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic species");
  synth->add_option("--spec", spec, "key=value species spec");
  synth->add_option("--template", tmpl, "template OBJ (default: the built-in bird)");
  synth->add_option("--out", out, "output directory")->required();

  auto* align = app.add_subcommand("align", "template-only alignment of every instance");
  data_opts(align);
  align->add_option("--out", out, "output directory")->required();

  auto* mean = app.add_subcommand("mean", "fit the species mean offset");
  data_opts(mean);
  mean->add_option("--params", params, "directory of alignment parameter files")->required();
  mean->add_option("--out", out, "species model JSON")->required();

  auto* basis = app.add_subcommand("basis", "fit the individual basis and re-learn it by PCA");
  data_opts(basis);
  basis->add_option("--params", params, "directory of alignment parameter files")->required();
  basis->add_option("--mean", model, "species model from `mean`")->required();
  basis->add_option("-k,--k", k, "basis size")->check(CLI::PositiveNumber);
  basis->add_option("--out", out, "species model JSON")->required();

  auto* aves = app.add_subcommand("aves", "multi-species PCA model");
  aves->add_option("--models", models, "species model files")->required();
  aves->add_option("--template", tmpl, "template OBJ")->required();
  aves->add_option("--rank", rank, "components to keep (default: species - 1)");
  aves->add_flag("--no-normalize", no_normalize, "skip unit body-length normalization");
  aves->add_option("--out", out, "model JSON")->required();

  auto* fit = app.add_subcommand("fit", "fit a model to every instance");
  data_opts(fit);
  fit->add_option("--model", model, "species or multi-species model (default: template only)");
  fit->add_flag("--mean-only", mean_only, "use the model mean without its components");
  fit->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score parameter files against a manifest");
  data_opts(eval);
  eval->add_option("--params", params, "directory of parameter files")->required();
  eval->add_option("--model", model, "model the parameters refer to (default: template)");
  eval->add_flag("--mean-only", mean_only, "use the model mean without its components");
  eval->add_option("--out", out, "metrics CSV");

  auto* analyze = app.add_subcommand("analyze", "embedding, phylogenetic signal and ancestral states");
  analyze->add_option("--model", model, "multi-species model");
  analyze->add_option("--traits", traits, "trait CSV (species, values...)");
  analyze->add_option("--tree", tree, "Newick tree")->required();
  analyze->add_option("--dims", dims, "use only the first dims trait columns");
  analyze->add_option("--out", out, "output directory")->required();

  auto* exp = app.add_subcommand("export", "write meshes as OBJ");
  exp->add_option("--template", tmpl, "template OBJ")->required();
  exp->add_option("--model", model, "species or multi-species model");
  exp->add_option("--params", params, "pose parameter file");
  exp->add_option("--mode", mode, "mesh or pca");
  exp->add_option("--component", component, "principal component (pca mode)");
  exp->add_option("--std", stdev, "offset in standard deviations (pca mode)");
  exp->add_option("--out", out, "output OBJ path (pca mode adds _pc<c>_plus/_minus)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (!g.config.empty()) g.kv = read_key_values(g.config);
    if (synth->parsed()) cmd_synth(g, spec, out, tmpl);
    if (align->parsed()) cmd_align(g, manifest, tmpl, prior, out);
    if (mean->parsed()) cmd_mean(g, manifest, tmpl, prior, params, out);
    if (basis->parsed()) cmd_basis(g, manifest, tmpl, prior, params, model, k, out);
    if (aves->parsed()) cmd_aves(g, models, tmpl, rank, no_normalize, out);
    if (fit->parsed()) cmd_fit(g, manifest, tmpl, prior, model, mean_only, out);
    if (eval->parsed()) cmd_eval(g, manifest, tmpl, prior, params, model, mean_only, out);
    if (analyze->parsed()) cmd_analyze(g, model, traits, tree, dims, out);
    if (exp->parsed()) cmd_export(g, tmpl, model, params, mode, component, stdev, out);
  } catch (const UsageError& e) {
    return fail("usage", e.what());
  } catch (const InvalidInput& e) {
    return fail("invalid_input", e.what());
  } catch (const NumericalError& e) {
    return fail("numerical", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail("io", e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
  return 0;
}
