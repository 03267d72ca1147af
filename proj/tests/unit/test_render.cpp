#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace avishape;

TEST_CASE("projection and its adjoint") {
  Camera cam = Camera::for_image(64, 48);
  CHECK(cam.focal == 128.0);
  CHECK(cam.principal == Eigen::Vector2d(32.0, 24.0));
  Points3 p(2, 3);
  p << 0.0, 0.0, 2.0, 1.0, -0.5, 4.0;
  const Points2 uv = project(cam, p);
  CHECK(uv(0, 0) == 32.0);
  CHECK(uv(1, 0) == doctest::Approx(32.0 + 128.0 / 4.0));
  CHECK(uv(1, 1) == doctest::Approx(24.0 - 0.5 * 128.0 / 4.0));
  Points2 g(2, 2);
  g << 0.3, -0.7, 1.1, 0.2;
  Points3 gx = Points3::Zero(2, 3);
  project_backward(cam, p, g, gx);
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 3; ++c) {
      Points3 pp = p, pm = p;
      pp(i, c) += 1e-6;
      pm(i, c) -= 1e-6;
      const double fd = ((project(cam, pp) - project(cam, pm)).array() * g.array()).sum() / 2e-6;
      CHECK(gx(i, c) == doctest::Approx(fd).epsilon(1e-7));
    }
  }
  p(1, 2) = -1.0;
  CHECK_THROWS_AS(project(cam, p), NumericalError);
}

TEST_CASE("soft silhouette boundary and tail values") {
  Points2 uv(3, 2);
  uv << 0.5, 0.5, 100.5, 0.5, 0.5, 100.5;  // edge along the first pixel row's centers
  Faces f(1, 3);
  f << 0, 1, 2;
  SoftRasterOptions o;
  o.sigma = 1.0;
  const SoftRaster r = soft_rasterize(uv, f, 8, 8, o);
  CHECK(r.occupancy(0, 3) == doctest::Approx(0.5).epsilon(1e-12));
  // pixel 20 sigma outside
  Points2 far(3, 2);
  far << 30.5, 0.5, 40.5, 0.5, 30.5, 10.5;
  o.sigma = 0.5;
  const SoftRaster r2 = soft_rasterize(far, f, 32, 12, o);
  CHECK(r2.occupancy(0, 20) < 1e-6);  // d = -10 = -20 sigma
  CHECK(r2.occupancy(0, 20) > 0.0);
}

TEST_CASE("soft rasterizer matches the brute-force oracle on random meshes") {
  std::mt19937_64 rng(42);
  int meshes = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const int w = 8 + trial % 9, h = 8 + (trial * 5) % 9;
    const oracle::Mesh2 m = oracle::random_triangles(rng, w, h, 1 + trial % 5);
    const double sigma = 0.3 + 0.2 * (trial % 7);
    SoftRasterOptions o;
    o.sigma = sigma;
    const Image got = soft_rasterize(m.uv, m.faces, w, h, o).occupancy;
    const Image ref = oracle::soft_silhouette(m.uv, m.faces, w, h, sigma);
    CHECK((got - ref).cwiseAbs().maxCoeff() < 1e-9);
    // Strictly inside (0, 1) wherever a face lies within the cull radius;
    // beyond it the contribution is dropped and the value is exactly 0.
    CHECK((got.array() >= 0.0).all());
    CHECK((got.array() < 1.0).all());
    CHECK((ref.array() <= 1e-12 || got.array() > 0.0).all());
    ++meshes;
  }
  CHECK(meshes >= 20);
}

TEST_CASE("adding a face never lowers occupancy") {
  std::mt19937_64 rng(8);
  const oracle::Mesh2 m = oracle::random_triangles(rng, 12, 12, 4);
  SoftRasterOptions o;
  Image prev = Image::Zero(12, 12);
  for (int k = 1; k <= 4; ++k) {
    const Image cur = soft_rasterize(m.uv, m.faces.topRows(k), 12, 12, o).occupancy;
    CHECK((cur.array() >= prev.array()).all());
    prev = cur;
  }
}

TEST_CASE("soft rasterizer gradient matches finite differences") {
  std::mt19937_64 rng(9);
  Points2 uv(4, 2);
  uv << 1.3, 1.7, 6.6, 2.2, 2.4, 6.9, 7.1, 6.3;
  Faces f(2, 3);
  f << 0, 1, 2, 1, 3, 2;
  SoftRasterOptions o;
  o.sigma = 0.8;
  Image w(8, 8);
  std::normal_distribution<double> n(0, 1);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
  const Image got = soft_rasterize(uv, f, 8, 8, o).occupancy;
  CHECK((got - oracle::soft_silhouette(uv, f, 8, 8, o.sigma)).cwiseAbs().maxCoeff() < 1e-9);
  auto fn = [&](const Eigen::VectorXd& x) {
    const Points2 p = Eigen::Map<const Points2>(x.data(), 4, 2);
    return (soft_rasterize(p, f, 8, 8, o).occupancy.array() * w.array()).sum();
  };
  const SoftRaster r = soft_rasterize(uv, f, 8, 8, o);
  const Points2 g = soft_rasterize_backward(uv, f, r, w, o);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(uv.data(), 8);
  const Eigen::VectorXd ga = Eigen::Map<const Eigen::VectorXd>(g.data(), 8);
  std::vector<Eigen::Index> all{0, 1, 2, 3, 4, 5, 6, 7};
  const auto res = oracle::check_gradient(fn, x, ga, all, 1e-6, 1e-4, 1e-6);
  CHECK(res.failed == 0);
  CHECK(res.checked == 8);
}

TEST_CASE("hard rasterizer: forced geometry and empty mesh") {
  Points2 uv(4, 2);
  uv << 2, 2, 6, 2, 6, 6, 2, 6;
  Faces f(2, 3);
  f << 0, 1, 2, 0, 2, 3;
  const BinaryMask m = rasterize_hard_2d(uv, f, 10, 10);
  CHECK(m.cast<int>().sum() == 16);
  for (int y = 2; y <= 5; ++y)
    for (int x = 2; x <= 5; ++x) CHECK(m(y, x) == 1);
  CHECK(rasterize_hard_2d(uv, Faces(0, 3), 10, 10).cast<int>().sum() == 0);
  PosedMesh empty;
  CHECK(rasterize_hard(empty, Camera::for_image(10, 10)).cast<int>().sum() == 0);
}

TEST_CASE("top-left rule covers each pixel center on a shared edge exactly once") {
  // Square split along a diagonal through pixel centers.
  Points2 uv(4, 2);
  uv << 0.5, 0.5, 8.5, 0.5, 8.5, 8.5, 0.5, 8.5;
  Faces a(1, 3), b(1, 3);
  a << 0, 1, 2;
  b << 0, 2, 3;
  const BinaryMask ma = rasterize_hard_2d(uv, a, 10, 10);
  const BinaryMask mb = rasterize_hard_2d(uv, b, 10, 10);
  for (int y = 1; y < 8; ++y) {
    for (int x = 1; x < 8; ++x) CHECK(ma(y, x) + mb(y, x) == 1);
  }
}

TEST_CASE("hard rasterizer matches the per-pixel oracle on random triangles") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const oracle::Mesh2 m = oracle::random_triangles(rng, 16, 16, 1 + trial % 3);
    CHECK(rasterize_hard_2d(m.uv, m.faces, 16, 16) == oracle::hard_silhouette(m.uv, m.faces, 16, 16));
  }
}

TEST_CASE("soft silhouette at small sigma agrees with the hard mask away from the boundary") {
  const auto& t = fixture::bird();
  const PosePrior prior = make_synthetic_bird_prior(t);
  const Camera cam = Camera::for_image(48, 48);
  const PosedMesh mesh = pose_mesh(t, fixture::centered_pose(t, prior, t.vertices()), t.vertices());
  const BinaryMask hard = rasterize_hard(mesh, cam);
  const Image soft = render_soft_silhouette(mesh, cam, 0.1);
  const Points2 uv = project(cam, mesh.vertices);
  int disagree = 0;
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      if ((soft(y, x) >= 0.5) == (hard(y, x) == 1)) continue;
      ++disagree;
      // distance from the pixel center to the silhouette boundary <= 1 px
      double best = 1e9;
      for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        const double d = std::abs(oracle::signed_distance({x + 0.5, y + 0.5}, uv.row(mesh.faces(f, 0)).transpose(),
                                                          uv.row(mesh.faces(f, 1)).transpose(),
                                                          uv.row(mesh.faces(f, 2)).transpose()));
        best = std::min(best, d);
      }
      CHECK(best <= 1.0);
    }
  }
  CHECK(hard.cast<int>().sum() > 100);
  MESSAGE("soft/hard disagreements: " << disagree);
}

TEST_CASE("first hit depth") {
  PosedMesh m;
  m.vertices.resize(3, 3);
  m.vertices << -1, -1, 5, 1, -1, 5, 0, 1, 5;
  m.faces.resize(1, 3);
  m.faces << 0, 1, 2;
  const Camera cam = Camera::for_image(32, 32);
  const auto d = first_hit_depth(m, cam, cam.principal);
  REQUIRE(d.has_value());
  CHECK(*d == doctest::Approx(5.0));
  CHECK_FALSE(first_hit_depth(m, cam, {0.0, 0.0}).has_value());
}
