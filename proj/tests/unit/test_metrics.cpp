#include "doctest.h"

#include "avishape/metrics.hpp"

#include <random>

using namespace avishape;

namespace {

BinaryMask mask_of(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  BinaryMask m = BinaryMask::Zero(h, w);
  for (auto [r, c] : on) m(r, c) = 1;
  return m;
}

}  // namespace

TEST_CASE("pck: identical predictions score 1") {
  Points2 gt = Points2::Random(18, 2) * 20.0;
  CHECK(pck(gt, gt, std::vector<bool>(18, true), {0, 0, 40, 30}) == 1.0);
}

TEST_CASE("pck: the threshold is inclusive") {
  // bbox size 100, threshold 5 px; displacements of exactly 3-4-5
  Points2 gt = Points2::Zero(18, 2);
  Points2 at = gt;
  at.col(0).setConstant(3.0);
  at.col(1).setConstant(4.0);
  const std::vector<bool> vis(18, true);
  const BoundingBox box{0, 0, 100, 60};
  CHECK(pck(at, gt, vis, box) == 1.0);
  Points2 beyond = gt;
  beyond.col(0).setConstant(5.0 + 1e-9);
  CHECK(pck(beyond, gt, vis, box) == 0.0);
}

TEST_CASE("pck: half inside matches a per-point oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0 * 3.141592653589793);
  Points2 gt = Points2::Zero(18, 2), pred(18, 2);
  const BoundingBox box{10, 10, 80, 50};  // threshold 4 px
  for (int k = 0; k < 18; ++k) {
    const double r = k < 9 ? 3.9 : 4.1, a = u(rng);
    pred.row(k) << r * std::cos(a), r * std::sin(a);
  }
  const std::vector<bool> vis(18, true);
  int oracle = 0;
  for (int k = 0; k < 18; ++k) oracle += (pred.row(k) - gt.row(k)).norm() <= 0.05 * 80.0;
  CHECK(oracle == 9);
  CHECK(pck(pred, gt, vis, box) == doctest::Approx(0.5));
}

TEST_CASE("pck: invisible keypoints are ignored and order does not matter") {
  Points2 gt = Points2::Zero(4, 2), pred = Points2::Zero(4, 2);
  pred(1, 0) = 100.0;
  pred(3, 0) = 100.0;
  const BoundingBox box{0, 0, 20, 20};
  CHECK(pck(pred, gt, {true, false, true, true}, box) == doctest::Approx(2.0 / 3.0));
  Points2 gp = gt, pp = pred;
  gp.row(0).swap(gp.row(3));
  pp.row(0).swap(pp.row(3));
  CHECK(pck(pp, gp, {true, false, true, true}, box) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("pck: invalid inputs") {
  Points2 a = Points2::Zero(3, 2);
  CHECK_THROWS_AS(pck(a, a, {true, true, true}, {0, 0, 0, 0}), InvalidInput);
  CHECK_THROWS_AS(pck(a, a, {false, false, false}, {0, 0, 5, 5}), InvalidInput);
  CHECK_THROWS_AS(pck(a, Points2::Zero(2, 2), {true, true, true}, {0, 0, 5, 5}), InvalidInput);
}

TEST_CASE("iou: hand-computed cases") {
  const BinaryMask a = mask_of(2, 2, {{0, 0}, {0, 1}});
  const BinaryMask b = mask_of(2, 2, {{0, 1}, {1, 1}});
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, mask_of(2, 2, {{1, 0}, {1, 1}})) == 0.0);
  CHECK(iou(BinaryMask::Zero(3, 3), BinaryMask::Zero(3, 3)) == 1.0);
  CHECK(iou(BinaryMask::Zero(3, 3), mask_of(3, 3, {{1, 1}})) == 0.0);
  CHECK_THROWS_AS(iou(BinaryMask::Zero(2, 2), BinaryMask::Zero(2, 3)), InvalidInput);
}

TEST_CASE("iou: symmetric on random masks") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < 20; ++t) {
    BinaryMask a(9, 7), b(9, 7);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = coin(rng);
      b.data()[i] = coin(rng);
    }
    int inter = 0, uni = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      inter += a.data()[i] && b.data()[i];
      uni += a.data()[i] || b.data()[i];
    }
    CHECK(iou(a, b) == doctest::Approx(static_cast<double>(inter) / uni).epsilon(1e-15));
    CHECK(iou(a, b) == iou(b, a));
  }
}
