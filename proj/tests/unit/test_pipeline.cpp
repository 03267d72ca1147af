#include "doctest.h"

#include "avishape/fitting.hpp"
#include "avishape/synth_db.hpp"
#include "avishape/synthetic_data.hpp"
#include "avishape/synthetic_template.hpp"

#include "fixtures.hpp"

#include <cmath>

using namespace avishape;

namespace {

const PosePrior& prior() {
  static const PosePrior p = make_synthetic_bird_prior(fixture::small_bird());
  return p;
}

SyntheticSpeciesSpec small_spec(int n, std::uint64_t seed) {
  SyntheticSpeciesSpec s;
  s.species = "unit";
  s.seed = seed;
  s.instances = n;
  s.image_size = 64;
  return s;
}

bool same_pose(const PoseParams& a, const PoseParams& b) {
  return a.theta == b.theta && a.alpha == b.alpha && a.gamma == b.gamma && a.kappa == b.kappa;
}

}  // namespace

TEST_CASE("synth db: deterministic in seed") {
  const auto& t = fixture::small_bird();
  const Camera cam = Camera::for_image(64, 64);
  const SynthDb a = build_synth_db(t, prior(), cam, 50, 9);
  const SynthDb b = build_synth_db(t, prior(), cam, 50, 9);
  const SynthDb c = build_synth_db(t, prior(), cam, 50, 10);
  REQUIRE(a.size() == 50);
  bool all_same = true, any_diff = false;
  for (int i = 0; i < 50; ++i) {
    all_same = all_same && same_pose(a.params[i], b.params[i]) && a.keypoints[i] == b.keypoints[i];
    any_diff = any_diff || !same_pose(a.params[i], c.params[i]);
    CHECK(a.params[i].kappa == Eigen::Vector2d(1.0, 1.0));
  }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("synth db: a stored entry is its own nearest neighbour") {
  const auto& t = fixture::small_bird();
  const Camera cam = Camera::for_image(64, 64);
  const SynthDb db = build_synth_db(t, prior(), cam, 40, 4);
  for (int i : {0, 7, 23}) {
    // Box-relative keypoints mapped back through an arbitrary box.
    const BoundingBox box{10.0, 5.0, 30.0, 30.0};
    Points2 kp = db.keypoints[i] * box.size();
    kp.rowwise() += box.center().transpose();
    const PoseParams p = init_pose(kp, std::vector<bool>(t.num_keypoints(), true), box, db);
    CHECK(p.theta == db.params[i].theta);
    CHECK(p.alpha == db.params[i].alpha);
  }
}

TEST_CASE("init pose: fewer than 4 visible keypoints throws") {
  const auto& t = fixture::small_bird();
  const SynthDb db = build_synth_db(t, prior(), Camera::for_image(64, 64), 5, 1);
  std::vector<bool> vis(t.num_keypoints(), false);
  vis[0] = vis[1] = vis[2] = true;
  CHECK_THROWS_AS(init_pose(Points2::Zero(t.num_keypoints(), 2), vis, {0, 0, 10, 10}, db), InvalidInput);
}

TEST_CASE("synthetic data: deterministic in seed") {
  const auto& t = fixture::small_bird();
  SyntheticSpeciesSpec s = small_spec(3, 5);
  s.mean_recipes = {{"crest", 0.05}};
  s.variation_recipes = {"slim"};
  s.variation_magnitude = 0.02;
  s.keypoint_noise_px = 1.0;
  const auto a = generate_synthetic_collection(t, prior(), s);
  const auto b = generate_synthetic_collection(t, prior(), s);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.instances[i].keypoints == b.instances[i].keypoints);
    CHECK(a.instances[i].mask == b.instances[i].mask);
    CHECK(same_pose(a.truth.poses[i], b.truth.poses[i]));
  }
  CHECK(a.truth.betas == b.truth.betas);
}

TEST_CASE("synthetic data: noiseless instances equal an exact render of the truth") {
  const auto& t = fixture::small_bird();
  SyntheticSpeciesSpec s = small_spec(3, 8);
  s.mean_recipes = {{"inflate-belly", 0.05}};
  const auto col = generate_synthetic_collection(t, prior(), s);
  for (int i = 0; i < 3; ++i) {
    const Points3 rest = t.vertices() + unflatten(col.truth.dv);
    const AnnotatedInstance ref = render_annotation(t, col.camera, col.truth.poses[i], rest, "x", "unit");
    CHECK(ref.mask == col.instances[i].mask);
    CHECK(ref.keypoints == col.instances[i].keypoints);
    CHECK(ref.visible == col.instances[i].visible);
    CHECK(col.truth.true_keypoints[i] == col.instances[i].keypoints);
  }
}

TEST_CASE("synthetic data: keypoint noise has the requested spread") {
  const auto& t = fixture::small_bird();
  SyntheticSpeciesSpec s = small_spec(40, 2);
  s.keypoint_noise_px = 2.0;
  const auto col = generate_synthetic_collection(t, prior(), s);
  double ss = 0.0;
  int n = 0;
  for (int i = 0; i < s.instances; ++i) {
    // Only visible keypoints are perturbed.
    for (int k = 0; k < t.num_keypoints(); ++k) {
      if (!col.instances[i].visible[k]) continue;
      ss += (col.instances[i].keypoints.row(k) - col.truth.true_keypoints[i].row(k)).squaredNorm();
      n += 2;
    }
  }
  const double sd = std::sqrt(ss / n);
  CHECK(sd >= 1.8);
  CHECK(sd <= 2.2);
}

TEST_CASE("shape space: shape is mean plus components times beta") {
  const auto& t = fixture::small_bird();
  ShapeSpace s;
  s.mean = flat(t.vertices());
  s.components = Eigen::MatrixXd::Random(s.mean.size(), 2);
  s.variances = Eigen::Vector2d(1.0, 0.5);
  const Eigen::Vector2d beta(0.3, -1.2);
  CHECK((flat(s.shape(beta)) - (s.mean + s.components * beta)).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(s.shape(Eigen::Vector3d::Zero()), InvalidInput);
}

TEST_CASE("align: recovers a noiseless instance") {
  const auto& t = fixture::small_bird();
  SyntheticSpeciesSpec s = small_spec(1, 12);
  s.image_size = 128;
  const auto col = generate_synthetic_collection(t, prior(), s);
  const SynthDb db = build_synth_db(t, prior(), col.camera, 500, 3);
  const FitResult r = align_instance(t, prior(), col.camera, col.instances[0], db, FitConfig{});
  CHECK_FALSE(r.failed);
  CHECK(r.pck >= 0.98);
  CHECK(r.iou > 0.9);
  const Points2 kp = project(col.camera, keypoint_positions(t, pose_mesh(t, r.params, t.vertices()).vertices));
  double se = 0.0;
  int n = 0;
  for (int k = 0; k < t.num_keypoints(); ++k) {
    if (!col.instances[0].visible[k]) continue;
    se += (kp.row(k) - col.instances[0].keypoints.row(k)).squaredNorm();
    ++n;
  }
  CHECK(std::sqrt(se / n) < 2.0);
}

TEST_CASE("align: an instance without visible keypoints is rejected") {
  const auto& t = fixture::small_bird();
  auto col = generate_synthetic_collection(t, prior(), small_spec(1, 12));
  col.instances[0].visible.assign(t.num_keypoints(), false);
  const SynthDb db = build_synth_db(t, prior(), col.camera, 10, 3);
  CHECK_THROWS_AS(align_instance(t, prior(), col.camera, col.instances[0], db, FitConfig{}), InvalidInput);
}

TEST_CASE("fit: without a beta stage coefficients stay zero and match the fixed-shape fit") {
  const auto& t = fixture::small_bird();
  const auto col = generate_synthetic_collection(t, prior(), small_spec(1, 13));
  const SynthDb db = build_synth_db(t, prior(), col.camera, 100, 3);
  FitConfig cfg;
  for (auto& s : cfg.stages) s.iters = std::min(s.iters, 20);
  ShapeSpace space;
  space.mean = flat(t.vertices());
  space.components = Eigen::MatrixXd::Random(space.mean.size(), 2) * 0.01;
  space.variances = Eigen::Vector2d(1.0, 1.0);
  const FitResult a = fit_model_to_instance(t, prior(), col.camera, space, col.instances[0], db, cfg);
  const FitResult b = align_instance(t, prior(), col.camera, col.instances[0], db, cfg);
  CHECK(a.beta == Eigen::Vector2d::Zero());
  // Equal up to summation order.
  CHECK((a.params.theta - b.params.theta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.params.gamma - b.params.gamma).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(a.energy == doctest::Approx(b.energy).epsilon(1e-7));
}

TEST_CASE("shape fits: precondition errors") {
  const auto& t = fixture::small_bird();
  const auto col = generate_synthetic_collection(t, prior(), small_spec(2, 14));
  const std::vector<AnnotatedInstance> one(col.instances.begin(), col.instances.begin() + 1);
  const std::vector<PoseParams> one_pose(col.truth.poses.begin(), col.truth.poses.begin() + 1);
  CHECK_THROWS_AS(fit_species_mean(t, col.camera, one, one_pose, ShapeFitConfig{}), InvalidInput);
  CHECK_THROWS_AS(fit_species_mean(t, col.camera, col.instances, one_pose, ShapeFitConfig{}), InvalidInput);
  BasisConfig bc;
  bc.k = 2;
  CHECK_THROWS_AS(fit_individuals(t, col.camera, col.instances, col.truth.poses, Eigen::VectorXd::Zero(3 * t.num_vertices()), bc),
                  InvalidInput);
  bc.k = 1;
  CHECK_THROWS_AS(fit_individuals(t, col.camera, col.instances, col.truth.poses, Eigen::VectorXd::Zero(3), bc), InvalidInput);
}

TEST_CASE("mean fit: zero iterations return dv = 0 and equal before/after scores") {
  const auto& t = fixture::small_bird();
  const auto col = generate_synthetic_collection(t, prior(), small_spec(2, 15));
  ShapeFitConfig c;
  c.iters = 0;
  const MeanFitResult r = fit_species_mean(t, col.camera, col.instances, col.truth.poses, c);
  CHECK(r.dv == Eigen::VectorXd::Zero(3 * t.num_vertices()));
  CHECK(r.iou_before == r.iou_after);
}

TEST_CASE("mean fit: moves toward a planted offset under true poses") {
  const auto& t = fixture::small_bird();
  SyntheticSpeciesSpec s = small_spec(4, 16);
  s.mean_recipes = {{"inflate-body", 0.1}};
  const auto col = generate_synthetic_collection(t, prior(), s);
  ShapeFitConfig c;
  c.iters = 150;
  c.sigmas = {0.25};
  const MeanFitResult r = fit_species_mean(t, col.camera, col.instances, col.truth.poses, c);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < r.iou_after.size(); ++i) before += r.iou_before[i], after += r.iou_after[i];
  CHECK(after > before);
  CHECK((r.dv - col.truth.dv).norm() < col.truth.dv.norm());
}

TEST_CASE("multi-species: identical and rescaled species give no variation") {
  const auto& t = fixture::small_bird();
  const Eigen::VectorXd v = flat(t.vertices());
  SpeciesModel a;
  a.species = "a";
  a.dv = recipe_displacement(t, "crest", 0.05);
  SpeciesModel b = a;
  b.species = "b";
  const Points3 shape = t.vertices() + unflatten(a.dv);
  const Eigen::RowVector3d c = shape.colwise().mean();
  Points3 doubled = ((shape.rowwise() - c) * 2.0).rowwise() + c;
  SpeciesModel d = a;
  d.species = "d";
  d.dv = flat(doubled) - v;
  const MultiSpeciesModel m = build_multispecies(t, {a, b, d}, true, -1);
  CHECK(m.pca.variances.size() <= 2);
  for (Eigen::Index k = 0; k < m.pca.variances.size(); ++k) CHECK(m.pca.variances[k] < 1e-20);
  const MultiSpeciesModel raw = build_multispecies(t, {a, b, d}, false, -1);
  REQUIRE(raw.pca.variances.size() >= 1);
  CHECK(raw.pca.variances[0] > 1e-4);
}

TEST_CASE("multi-species: rank above S - 1 is clamped with a warning") {
  const auto& t = fixture::small_bird();
  std::vector<SpeciesModel> ms;
  for (const char* r : {"crest", "slim", "inflate-belly"}) {
    SpeciesModel m;
    m.species = r;
    m.dv = recipe_displacement(t, r, 0.05);
    ms.push_back(m);
  }
  std::vector<std::string> warn;
  const MultiSpeciesModel m = build_multispecies(t, ms, true, 7, &warn);
  CHECK(m.pca.rank() == 2);
  REQUIRE(warn.size() == 1);
  CHECK(warn[0].find("clamped") != std::string::npos);
  CHECK(m.coefficients.rows() == 3);
  CHECK_THROWS_AS(build_multispecies(t, {ms[0]}, true, -1), InvalidInput);
}
