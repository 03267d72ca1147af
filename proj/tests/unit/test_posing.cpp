#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <Eigen/Geometry>

#include <numbers>

using namespace avishape;

TEST_CASE("axis-angle rotation is orthonormal and its derivatives match finite differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (double mag : {0.0, 1e-5, 5e-4, 2e-3, 0.3, 2.0, 3.1}) {
    Eigen::Vector3d w(n(rng), n(rng), n(rng));
    w = w.normalized() * mag;
    const auto r = axis_angle_rotation(w, true);
    CHECK((r.R * r.R.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(r.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    if (mag > 0) {
      const Eigen::Matrix3d ref = Eigen::AngleAxisd(mag, w.normalized()).toRotationMatrix();
      CHECK((r.R - ref).norm() < 1e-12);
    }
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      Eigen::Vector3d wp = w, wm = w;
      wp[k] += h;
      wm[k] -= h;
      const Eigen::Matrix3d fd = (axis_angle_rotation(wp).R - axis_angle_rotation(wm).R) / (2 * h);
      CHECK((fd - r.dR[k]).norm() < 1e-8);
    }
  }
}

TEST_CASE("wrap_axis_angle keeps the rotation and bounds the angle by pi") {
  const Eigen::Vector3d w = Eigen::Vector3d(0.3, -0.5, 0.8).normalized() * 5.0;
  const Eigen::Vector3d u = wrap_axis_angle(w);
  CHECK(u.norm() <= std::numbers::pi + 1e-12);
  CHECK((axis_angle_rotation(u).R - axis_angle_rotation(w).R).norm() < 1e-12);
  CHECK(wrap_axis_angle(Eigen::Vector3d(0.1, 0.2, 0.3)) == Eigen::Vector3d(0.1, 0.2, 0.3));
}

TEST_CASE("rest-pose identity") {
  const auto& t = fixture::bird();
  const PosedMesh m = pose_mesh(t, PoseParams::neutral(t.num_joints()), t.vertices());
  CHECK((m.vertices - t.vertices()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((m.joints - t.joints()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("translation equivariance in gamma") {
  const auto& t = fixture::bird();
  const PosePrior prior = make_synthetic_bird_prior(t);
  std::mt19937_64 rng(11);
  PoseParams p = fixture::jittered(fixture::centered_pose(t, prior, t.vertices()), rng);
  const Points3 a = pose_mesh(t, p, t.vertices()).vertices;
  const Eigen::Vector3d shift(0.25, -1.5, 4.0);
  p.gamma += shift;
  const Points3 b = pose_mesh(t, p, t.vertices()).vertices;
  CHECK(((b.rowwise() - shift.transpose()) - a).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("root-only rotation moves the mesh rigidly about the root joint") {
  const auto& t = fixture::bird();
  PoseParams p = PoseParams::neutral(t.num_joints());
  const Eigen::Vector3d w(0.4, -1.1, 0.7);
  p.theta.segment<3>(3 * t.root_joint()) = w;
  const Points3 posed = pose_mesh(t, p, t.vertices()).vertices;
  const Eigen::Matrix3d R = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
  const Eigen::Vector3d c = t.joints().row(t.root_joint()).transpose();
  for (int i = 0; i < t.num_vertices(); ++i) {
    const Eigen::Vector3d expect = R * (t.vertices().row(i).transpose() - c) + c;
    CHECK((posed.row(i).transpose() - expect).norm() < 1e-9);
  }
}

TEST_CASE("skinning matches a homogeneous-transform oracle") {
  const auto& t = fixture::bird();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 0.4);
  for (int trial = 0; trial < 5; ++trial) {
    PoseParams p = PoseParams::neutral(t.num_joints());
    for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta[i] = n(rng);
    p.gamma = Eigen::Vector3d(n(rng), n(rng), n(rng));
    const Points3 got = pose_mesh(t, p, t.vertices()).vertices;
    CHECK((got - oracle::lbs(t, p, t.vertices())).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("shape state is untouched by articulation") {
  const auto& t = fixture::small_bird();
  ShapeState s = ShapeState::zero(t.num_vertices(), 2);
  s.dv.setConstant(0.01);
  s.basis.setConstant(0.002);
  const ShapeState copy = s;
  PoseParams p = PoseParams::neutral(t.num_joints());
  p.theta.setConstant(0.3);
  (void)pose_mesh(t, p, s, Eigen::Vector2d(0.5, -1.0));
  CHECK(s.dv == copy.dv);
  CHECK(s.basis == copy.basis);
}

TEST_CASE("beak scaling lengthens the beak along its axis and leaves the body") {
  const auto& t = fixture::bird();
  const PartScaling beak = part_scaling(t, "beak");
  const Points3 scaled = scale_part(t.vertices(), beak, 1.5);
  const int tip = t.keypoints()[t.keypoint_index("beak_tip")].vertices.front();
  const double before = (t.vertices().row(tip).transpose() - beak.anchor).dot(beak.axis);
  const double after = (scaled.row(tip).transpose() - beak.anchor).dot(beak.axis);
  CHECK(after == doctest::Approx(1.5 * before).epsilon(1e-12));
  std::vector<bool> in(t.num_vertices(), false);
  for (int v : beak.vertices) in[v] = true;
  for (int v = 0; v < t.num_vertices(); ++v) {
    if (!in[v]) CHECK(scaled.row(v) == t.vertices().row(v));
  }
  CHECK_THROWS_AS(scale_part(t.vertices(), beak, 0.0), InvalidInput);
}

TEST_CASE("pose adjoint matches central differences for every parameter block") {
  const auto& t = fixture::small_bird();
  const PosePrior prior = make_synthetic_bird_prior(t);
  std::mt19937_64 rng(17);
  Points3 rest = t.vertices();
  std::normal_distribution<double> n(0, 0.01);
  for (Eigen::Index i = 0; i < rest.size(); ++i) rest.data()[i] += n(rng);
  const PoseParams p0 = fixture::jittered(fixture::centered_pose(t, prior, rest), rng);
  // random linear functional of the posed vertices
  Points3 weights(t.num_vertices(), 3);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = n(rng) * 100.0;

  const int nj = t.num_joints();
  const Eigen::Index n_pose = 3 * nj + nj + 3 + 2;
  auto unpack = [&](const Eigen::VectorXd& x, PoseParams& p, Points3& s) {
    p = p0;
    p.theta = x.segment(0, 3 * nj);
    p.alpha = x.segment(3 * nj, nj);
    p.gamma = x.segment<3>(4 * nj);
    p.kappa = x.segment<2>(4 * nj + 3);
    s = unflatten(x.tail(x.size() - n_pose));
  };
  Eigen::VectorXd x(n_pose + rest.size());
  x << p0.theta, p0.alpha, p0.gamma, p0.kappa, flat(rest);
  auto f = [&](const Eigen::VectorXd& xx) {
    PoseParams p;
    Points3 s;
    unpack(xx, p, s);
    return (pose_mesh(t, p, s).vertices.array() * weights.array()).sum();
  };
  PoseParams p;
  Points3 s;
  unpack(x, p, s);
  const PoseCache cache = pose_forward(t, p, s, true);
  PoseGradient g;
  g.reset(t.num_vertices(), nj);
  pose_backward(t, p, cache, weights, g);
  Eigen::VectorXd analytic(x.size());
  analytic << g.theta, g.alpha, g.gamma, g.kappa, flat(g.shape);

  std::vector<Eigen::Index> coords;
  for (Eigen::Index i = 0; i < n_pose; ++i) coords.push_back(i);
  for (auto i : oracle::sample_coords(rest.size(), 120, rng)) coords.push_back(n_pose + i);
  const auto r = oracle::check_gradient(f, x, analytic, coords, 1e-6, 1e-6, 1e-3);
  CHECK(r.failed == 0);
  CHECK(r.checked >= 100);
  MESSAGE("pose adjoint worst rel err " << r.worst);
}
