#include "avishape/synthetic_data.hpp"

#include "avishape/synth_db.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace avishape {

namespace {

struct Frame {
  Eigen::Vector3d a, b;  // part axis end points (anchor side, far side)
};

// Axis through a part's vertices: principal direction with extent.
Frame part_frame(const TemplateModel& tmpl, const std::string& name) {
  const PartGroup& g = tmpl.part(name);
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int v : g.vertices) c += tmpl.vertices().row(v).transpose();
  c /= static_cast<double>(g.vertices.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int v : g.vertices) {
    const Eigen::Vector3d d = tmpl.vertices().row(v).transpose() - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d axis = eig.eigenvectors().col(2);
  if (axis.z() < 0.0) axis = -axis;
  double lo = 0.0, hi = 0.0;
  for (int v : g.vertices) {
    const double t = (tmpl.vertices().row(v).transpose() - c).dot(axis);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  return {c + lo * axis, c + hi * axis};
}

double bump(double t, double center, double width) {
  const double u = (t - center) / width;
  return std::exp(-u * u);
}

}  // namespace

const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"inflate-belly", "elongate-tail", "crest", "slim", "inflate-body"};
  return names;
}

Eigen::VectorXd recipe_displacement(const TemplateModel& tmpl, const std::string& recipe, double magnitude) {
  const Points3& v = tmpl.vertices();
  Points3 d = Points3::Zero(v.rows(), 3);
  auto radial = [&](const std::string& part, auto&& weight) {
    const Frame f = part_frame(tmpl, part);
    const Eigen::Vector3d ax = (f.b - f.a).normalized();
    const double len = (f.b - f.a).norm();
    for (int i : tmpl.part(part).vertices) {
      const Eigen::Vector3d p = v.row(i).transpose();
      const double t = (p - f.a).dot(ax) / len;
      Eigen::Vector3d r = p - (f.a + t * len * ax);
      const double rn = r.norm();
      if (rn == 0.0) continue;
      r /= rn;
      d.row(i) = weight(t, r) * r.transpose();
    }
  };
  if (recipe == "inflate-belly") {
    radial("body", [](double t, const Eigen::Vector3d& r) { return bump(t, 0.5, 0.3) * (0.3 + 0.7 * std::max(0.0, r.y())); });
  } else if (recipe == "inflate-body") {
    radial("body", [](double t, const Eigen::Vector3d&) { return bump(t, 0.5, 0.35); });
  } else if (recipe == "slim") {
    radial("body", [](double t, const Eigen::Vector3d&) { return -bump(t, 0.5, 0.45); });
    radial("neck", [](double, const Eigen::Vector3d&) { return -0.5; });
  } else if (recipe == "crest") {
    const Frame f = part_frame(tmpl, "head");
    const Eigen::Vector3d ax = (f.b - f.a).normalized();
    const double len = (f.b - f.a).norm();
    for (int i : tmpl.part("head").vertices) {
      const Eigen::Vector3d p = v.row(i).transpose();
      const double t = (p - f.a).dot(ax) / len;
      Eigen::Vector3d r = p - (f.a + t * len * ax);
      const double up = std::max(0.0, -r.y() / std::max(r.norm(), 1e-12));
      d(i, 1) = -bump(t, 0.4, 0.3) * up * up;
    }
  } else if (recipe == "elongate-tail") {
    const PartGroup& g = tmpl.part("tail");
    const Eigen::Vector3d anchor = tmpl.joints().row(g.anchor_joint).transpose();
    const Eigen::Vector3d ax = tmpl.part_axis("tail");
    double far = 0.0;
    for (int i : g.vertices) far = std::max(far, (v.row(i).transpose() - anchor).dot(ax));
    for (int i : g.vertices) {
      const double t = std::max(0.0, (v.row(i).transpose() - anchor).dot(ax) / far);
      d.row(i) = (t * ax).transpose();
    }
  } else {
    throw InvalidInput("unknown deformation recipe '" + recipe + "'");
  }
  const double mx = d.rowwise().norm().maxCoeff();
  if (mx > 0.0) d *= magnitude * tmpl.body_length() / mx;
  return flat(d);
}

void SyntheticSpeciesSpec::validate() const {
  if (instances < 1) throw InvalidInput("synthetic spec: instance count must be at least 1");
  if (!(variation_magnitude >= 0.0)) throw InvalidInput("synthetic spec: variation magnitude must be nonnegative");
  if (!(pose_scale >= 0.0)) throw InvalidInput("synthetic spec: pose scale must be nonnegative");
  if (!(keypoint_noise_px >= 0.0)) throw InvalidInput("synthetic spec: keypoint noise must be nonnegative");
  if (mask_noise_px < 0) throw InvalidInput("synthetic spec: mask noise must be nonnegative");
  if (image_size < 8) throw InvalidInput("synthetic spec: image size must be at least 8");
  if (!(position_jitter >= 0.0)) throw InvalidInput("synthetic spec: position jitter must be nonnegative");
  for (const auto& r : mean_recipes) {
    if (std::find(recipe_names().begin(), recipe_names().end(), r.recipe) == recipe_names().end()) {
      throw InvalidInput("synthetic spec: unknown recipe '" + r.recipe + "'");
    }
  }
  for (const auto& r : variation_recipes) {
    if (std::find(recipe_names().begin(), recipe_names().end(), r) == recipe_names().end()) {
      throw InvalidInput("synthetic spec: unknown recipe '" + r + "'");
    }
  }
}

BinaryMask morph_disc(const BinaryMask& mask, int radius) {
  if (radius == 0) return mask;
  const int r = std::abs(radius);
  const bool dilate = radius > 0;
  const auto h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false, all = true;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > r * r) continue;
          const int yy = y + dy, xx = x + dx;
          const bool on = yy >= 0 && yy < h && xx >= 0 && xx < w && mask(yy, xx);
          any = any || on;
          all = all && on;
        }
      }
      out(y, x) = dilate ? any : all;
    }
  }
  return out;
}

AnnotatedInstance render_annotation(const TemplateModel& tmpl, const Camera& camera, const PoseParams& params,
                                    const Points3& rest_shape, const std::string& id, const std::string& species) {
  const PosedMesh mesh = pose_mesh(tmpl, params, rest_shape);
  AnnotatedInstance inst;
  inst.id = id;
  inst.species = species;
  const Points3 kp3 = keypoint_positions(tmpl, mesh.vertices);
  inst.keypoints = project(camera, kp3);
  inst.visible.assign(tmpl.num_keypoints(), true);
  const double tol = 0.01 * tmpl.body_length();
  for (int k = 0; k < tmpl.num_keypoints(); ++k) {
    const Eigen::Vector2d uv = inst.keypoints.row(k).transpose();
    if (uv.x() < 0.0 || uv.y() < 0.0 || uv.x() > camera.width || uv.y() > camera.height) {
      inst.visible[k] = false;
      continue;
    }
    const auto hit = first_hit_depth(mesh, camera, uv);
    if (hit && kp3(k, 2) > *hit + tol) inst.visible[k] = false;
  }
  inst.mask = rasterize_hard(mesh, camera);
  inst.bbox = mask_bbox(inst.mask);
  return inst;
}

SyntheticCollection generate_synthetic_collection(const TemplateModel& tmpl, const PosePrior& prior,
                                                  const SyntheticSpeciesSpec& spec) {
  spec.validate();
  const int n3 = 3 * tmpl.num_vertices();
  const int nj = tmpl.num_joints();
  SyntheticCollection out;
  out.camera = Camera::for_image(spec.image_size, spec.image_size);
  SyntheticGroundTruth& gt = out.truth;
  gt.dv = Eigen::VectorXd::Zero(n3);
  for (const auto& r : spec.mean_recipes) gt.dv += recipe_displacement(tmpl, r.recipe, r.magnitude);
  const int k = static_cast<int>(spec.variation_recipes.size());
  gt.basis.resize(n3, k);
  for (int c = 0; c < k; ++c) {
    gt.basis.col(c) = recipe_displacement(tmpl, spec.variation_recipes[c], spec.variation_magnitude);
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const PosePrior pp = prior.scaled(spec.pose_scale);
  const double depth = canonical_depth(tmpl, out.camera);
  gt.betas.resize(spec.instances, k);
  for (int i = 0; i < spec.instances; ++i) {
    for (int c = 0; c < k; ++c) gt.betas(i, c) = normal(rng);
    Points3 rest = tmpl.vertices();
    flat(rest) += gt.dv + gt.basis * gt.betas.row(i).transpose();

    PoseParams p = PoseParams::neutral(nj);
    AnnotatedInstance inst;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Eigen::VectorXd zt(3 * nj), za(nj);
      for (auto& z : zt) z = normal(rng);
      for (auto& z : za) z = normal(rng);
      p.theta = pp.theta_mean() + pp.theta_llt().matrixL() * zt;
      p.alpha = pp.alpha_mean() + pp.alpha_llt().matrixL() * za;
      const double jx = uni(rng), jy = uni(rng);
      if ((p.alpha.array() <= 0.0).any()) continue;
      p.gamma = centering_translation(tmpl, p, rest, depth);
      p.gamma.x() += jx * spec.position_jitter * spec.image_size * depth / out.camera.focal;
      p.gamma.y() += jy * spec.position_jitter * spec.image_size * depth / out.camera.focal;
      inst = render_annotation(tmpl, out.camera, p, rest, spec.species + "_" + std::to_string(i), spec.species);
      ok = inst.num_visible() >= 4 && inst.bbox.size() > 0.0;
    }
    if (!ok) throw NumericalError("synthetic collection: could not place instance " + std::to_string(i));
    gt.poses.push_back(p);
    gt.true_keypoints.push_back(inst.keypoints);
    gt.true_masks.push_back(inst.mask);

    if (spec.keypoint_noise_px > 0.0) {
      for (Eigen::Index kp = 0; kp < inst.keypoints.rows(); ++kp) {
        const double du = spec.keypoint_noise_px * normal(rng), dv = spec.keypoint_noise_px * normal(rng);
        if (!inst.visible[kp]) continue;
        inst.keypoints(kp, 0) = std::clamp(inst.keypoints(kp, 0) + du, 0.0, static_cast<double>(spec.image_size));
        inst.keypoints(kp, 1) = std::clamp(inst.keypoints(kp, 1) + dv, 0.0, static_cast<double>(spec.image_size));
      }
    }
    if (spec.mask_noise_px > 0) {
      const int r = coin(rng) ? spec.mask_noise_px : -spec.mask_noise_px;
      BinaryMask m = morph_disc(inst.mask, r);
      if (mask_bbox(m).size() > 0.0) inst.mask = std::move(m);
      inst.bbox = mask_bbox(inst.mask);
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

}  // namespace avishape
