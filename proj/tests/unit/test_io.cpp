#include "doctest.h"

#include "avishape/io.hpp"
#include "avishape/synthetic_template.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace avishape;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("avishape_io_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Eigen::MatrixXd awkward(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng) * std::pow(10.0, (i % 7) - 3) + 1e-300 * (i % 2);
  return m;
}

bool same_bits(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("io: blob round trip keeps every bit") {
  TempDir d;
  const Eigen::MatrixXd m = awkward(5, 7, 1);
  write_blob(d.path / "a.f64", m.data(), static_cast<std::size_t>(m.size()));
  const auto back = read_blob(d.path / "a.f64");
  CHECK(same_bits(Eigen::Map<const Eigen::MatrixXd>(back.data(), 5, 7), m));
  CHECK(fs::file_size(d.path / "a.f64") == 35 * 8);
  CHECK(!fs::exists(d.path / "a.f64.tmp"));
}

TEST_CASE("io: template OBJ + sidecar round trip") {
  TempDir d;
  const TemplateModel t = make_synthetic_bird({0.5});
  TemplateData data = t.data();
  data.vertices += Points3::Constant(data.vertices.rows(), 3, 1.0 / 3.0);
  write_template(d.path / "bird.obj", data);
  CHECK(fs::exists(d.path / "bird.json"));
  const TemplateData back = read_template(d.path / "bird.obj");
  CHECK(same_bits(back.vertices, data.vertices));
  CHECK(back.faces == data.faces);
  CHECK(same_bits(back.joints, data.joints));
  CHECK(back.parent == data.parent);
  CHECK(back.joint_names == data.joint_names);
  REQUIRE(back.skin_weights.size() == data.skin_weights.size());
  for (std::size_t i = 0; i < back.skin_weights.size(); ++i) CHECK(back.skin_weights[i].weight == data.skin_weights[i].weight);
  CHECK(back.symmetry_pairs == data.symmetry_pairs);
  CHECK(same_bits(back.rigidity, data.rigidity));
  CHECK(TemplateModel(back).hash() == TemplateModel(data).hash());
}

TEST_CASE("io: malformed OBJ is rejected") {
  TempDir d;
  write_atomic(d.path / "q.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n");
  Points3 v;
  Faces f;
  CHECK_THROWS_AS(read_obj(d.path / "q.obj", v, f), InvalidInput);
  write_atomic(d.path / "r.obj", "v 0 0 0\nf 1 2 3\n");
  CHECK_THROWS_AS(read_obj(d.path / "r.obj", v, f), InvalidInput);
  write_atomic(d.path / "s.obj", "v 0 zero 0\n");
  CHECK_THROWS_AS(read_obj(d.path / "s.obj", v, f), InvalidInput);
}

TEST_CASE("io: PGM round trip and header checks") {
  TempDir d;
  BinaryMask m = BinaryMask::Zero(5, 9);
  m(0, 0) = m(4, 8) = m(2, 3) = 1;
  write_pgm(d.path / "m.pgm", m);
  CHECK(read_pgm(d.path / "m.pgm") == m);
  CHECK(read_text(d.path / "m.pgm").substr(0, 11) == "P5\n9 5\n255\n");
  write_atomic(d.path / "p2.pgm", "P2\n2 2\n255\n0 0 0 0\n");
  CHECK_THROWS_AS(read_pgm(d.path / "p2.pgm"), InvalidInput);
  write_atomic(d.path / "short.pgm", std::string("P5\n4 4\n255\n") + std::string(15, '\0'));
  CHECK_THROWS_AS(read_pgm(d.path / "short.pgm"), InvalidInput);
  write_atomic(d.path / "c.pgm", std::string("P5 # comment\n2 1\n255\n") + std::string("\x07\x00", 2));
  const BinaryMask c = read_pgm(d.path / "c.pgm");
  CHECK(c(0, 0) == 1);
  CHECK(c(0, 1) == 0);
}

TEST_CASE("io: manifest round trip") {
  TempDir d;
  Manifest m;
  m.template_hash = "0123456789abcdef";
  m.camera = Camera::for_image(16, 12);
  for (int i = 0; i < 3; ++i) {
    AnnotatedInstance a;
    a.id = "sp_" + std::to_string(i);
    a.species = "sp";
    a.keypoints = awkward(4, 2, 10 + i).array().abs().min(5.0) + 2.0 / 3.0;
    a.visible = {true, i != 1, true, false};
    a.mask = BinaryMask::Zero(12, 16);
    a.mask.block(2, 3, 4, 5).setOnes();
    a.bbox = mask_bbox(a.mask);
    m.instances.push_back(a);
  }
  write_manifest(d.path / "manifest.json", m);
  const Manifest b = read_manifest(d.path / "manifest.json");
  CHECK(b.template_hash == m.template_hash);
  CHECK(b.camera == m.camera);
  REQUIRE(b.instances.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(b.instances[i].id == m.instances[i].id);
    CHECK(same_bits(b.instances[i].keypoints, m.instances[i].keypoints));
    CHECK(b.instances[i].visible == m.instances[i].visible);
    CHECK(b.instances[i].mask == m.instances[i].mask);
    CHECK(b.instances[i].bbox == m.instances[i].bbox);
  }
}

TEST_CASE("io: params round trip") {
  TempDir d;
  ParamsFile p;
  p.id = "x";
  p.params = PoseParams::neutral(4);
  p.params.theta = awkward(12, 1, 3);
  p.params.alpha = awkward(4, 1, 4).cwiseAbs();
  p.params.gamma = Eigen::Vector3d(0.1, -0.2, 3.0 + 1e-15);
  p.params.kappa = Eigen::Vector2d(1.0 / 7.0, 1.1);
  p.beta = awkward(3, 1, 5);
  p.pck = 0.9;
  p.iou = 2.0 / 3.0;
  p.failed = true;
  p.failure = "low iou";
  write_params(d.path / "p.json", p);
  const ParamsFile b = read_params(d.path / "p.json");
  CHECK(b.params == p.params);
  CHECK(same_bits(b.beta, p.beta));
  CHECK(b.iou == p.iou);
  CHECK(b.failed);
  CHECK(b.failure == p.failure);
}

TEST_CASE("io: species and multi-species models round trip") {
  TempDir d;
  SpeciesModel s;
  s.species = "gull";
  s.template_hash = "abc";
  s.dv = awkward(30, 1, 6);
  s.basis = awkward(30, 2, 7);
  s.instance_ids = {"a", "b", "c"};
  s.betas = awkward(3, 2, 8);
  s.pca.mean = awkward(30, 1, 9);
  s.pca.components = awkward(30, 2, 10);
  s.pca.variances = Eigen::Vector2d(2.0, 1.0 / 3.0);
  write_species_model(d.path / "gull.json", s);
  CHECK(model_kind(d.path / "gull.json") == "species");
  const SpeciesModel b = read_species_model(d.path / "gull.json");
  CHECK(b.species == s.species);
  CHECK(b.instance_ids == s.instance_ids);
  CHECK(same_bits(b.dv, s.dv));
  CHECK(same_bits(b.basis, s.basis));
  CHECK(same_bits(b.betas, s.betas));
  CHECK(same_bits(b.pca.components, s.pca.components));
  CHECK(same_bits(b.pca.variances, s.pca.variances));
  CHECK_THROWS_AS(read_multispecies_model(d.path / "gull.json"), InvalidInput);

  MultiSpeciesModel m;
  m.template_hash = "abc";
  m.normalized = false;
  m.species = {"gull", "tern"};
  m.coefficients = awkward(2, 1, 11);
  m.pca.mean = awkward(30, 1, 12);
  m.pca.components = awkward(30, 1, 13);
  m.pca.variances = Eigen::VectorXd::Constant(1, 0.25);
  write_multispecies_model(d.path / "aves.json", m);
  const MultiSpeciesModel mb = read_multispecies_model(d.path / "aves.json");
  CHECK(!mb.normalized);
  CHECK(mb.species == m.species);
  CHECK(same_bits(mb.coefficients, m.coefficients));
  CHECK(same_bits(mb.pca.mean, m.pca.mean));
}

TEST_CASE("io: pose prior round trip") {
  TempDir d;
  const PosePrior p = make_synthetic_bird_prior(make_synthetic_bird({0.5}));
  write_prior(d.path / "prior.json", p);
  const PosePrior b = read_prior(d.path / "prior.json");
  CHECK(same_bits(b.theta_mean(), p.theta_mean()));
  CHECK(same_bits(b.theta_cov(), p.theta_cov()));
  CHECK(same_bits(b.alpha_mean(), p.alpha_mean()));
  CHECK(same_bits(b.alpha_cov(), p.alpha_cov()));
}

TEST_CASE("io: truncated model arrays are rejected") {
  TempDir d;
  SpeciesModel s;
  s.dv = awkward(6, 1, 1);
  s.basis.resize(6, 0);
  s.betas.resize(0, 0);
  s.pca.mean = s.dv;
  s.pca.components.resize(6, 0);
  s.pca.variances.resize(0);
  write_species_model(d.path / "m.json", s);
  write_atomic(d.path / "m.dv.f64", std::string(40, '\0'));
  CHECK_THROWS_AS(read_species_model(d.path / "m.json"), InvalidInput);
}

TEST_CASE("io: template hash check names both hashes") {
  CHECK_NOTHROW(check_template_hash("a", "a", "model"));
  try {
    check_template_hash("aaaa", "bbbb", "model m.json");
    FAIL("expected a throw");
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    CHECK(msg.find("template hash mismatch") != std::string::npos);
    CHECK(msg.find("aaaa") != std::string::npos);
    CHECK(msg.find("bbbb") != std::string::npos);
  }
}

TEST_CASE("io: key=value config parsing and typed access") {
  const KeyValues kv = parse_key_values("# weights\nw_kp = 2.5\n\nw_msk=10 # inline\nsigmas = 0.5, 0.25\nflag = true\n");
  CHECK(kv_double(kv, "w_kp", 0.0) == 2.5);
  CHECK(kv_double(kv, "missing", 7.0) == 7.0);
  CHECK(kv_bool(kv, "flag", false));
  CHECK(kv_doubles(kv, "sigmas", {}) == std::vector<double>{0.5, 0.25});
  const EnergyWeights w = energy_weights_from(kv);
  CHECK(w.w_kp == 2.5);
  CHECK(w.w_msk == 10.0);
  CHECK(w.w_lap == EnergyWeights{}.w_lap);
  CHECK_THROWS_AS(parse_key_values("novalue\n"), InvalidInput);
  CHECK_THROWS_AS(kv_double(parse_key_values("a = 1x"), "a", 0.0), InvalidInput);
  CHECK_THROWS_AS(kv_int(parse_key_values("a = 1.5"), "a", 0), InvalidInput);
  CHECK_THROWS_AS(energy_weights_from(parse_key_values("w_lap = -1")), InvalidInput);
  CHECK(parse_key_values(format_key_values(kv)) == kv);
}

TEST_CASE("io: synthetic spec from config") {
  const SyntheticSpeciesSpec s = synthetic_spec_from(
      parse_key_values("species = tern\nseed = 9\nmean = inflate-belly:0.05, elongate-tail:0.04\nvariation = slim\n"
                       "variation_magnitude = 0.03\ninstances = 7\nimage_size = 48\n"));
  CHECK(s.species == "tern");
  CHECK(s.seed == 9);
  REQUIRE(s.mean_recipes.size() == 2);
  CHECK(s.mean_recipes[1].recipe == "elongate-tail");
  CHECK(s.mean_recipes[1].magnitude == 0.04);
  CHECK(s.variation_recipes == std::vector<std::string>{"slim"});
  CHECK(s.instances == 7);
  CHECK_THROWS_AS(synthetic_spec_from(parse_key_values("mean = wings:0.1")), InvalidInput);
  CHECK_THROWS_AS(synthetic_spec_from(parse_key_values("instances = 0")), InvalidInput);
}

TEST_CASE("io: traits CSV round trip and SVG labels") {
  TempDir d;
  const std::vector<std::string> sp{"a", "b", "c"};
  const Eigen::MatrixXd t = awkward(3, 4, 14);
  write_traits_csv(d.path / "t.csv", sp, t);
  std::vector<std::string> sp2;
  Eigen::MatrixXd t2;
  read_traits_csv(d.path / "t.csv", sp2, t2);
  CHECK(sp2 == sp);
  CHECK(same_bits(t2, t));
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), InvalidInput);
  const std::string svg = scatter_svg({"x<y", "z"}, Eigen::MatrixXd::Identity(2, 2), "embedding");
  CHECK(svg.find("x&lt;y") != std::string::npos);
  CHECK(svg.find("<circle") != std::string::npos);
}
