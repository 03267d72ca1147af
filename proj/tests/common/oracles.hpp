#pragma once
// Independent reference implementations used by the unit and acceptance
// tests. Deliberately naive: per-pixel, per-face loops with no culling.

#include "avishape/posing.hpp"
#include "avishape/template_model.hpp"
#include "avishape/types.hpp"

#include <Eigen/Geometry>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using avishape::Faces;
using avishape::Image;
using avishape::Points2;
using avishape::Points3;

inline double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double l2 = ab.squaredNorm();
  double t = l2 > 0.0 ? (p - a).dot(ab) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

// Strict interior test by orientation signs, either winding.
inline bool inside_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                            const Eigen::Vector2d& c) {
  const double d1 = cross2(b - a, p - a), d2 = cross2(c - b, p - b), d3 = cross2(a - c, p - c);
  return (d1 > 0 && d2 > 0 && d3 > 0) || (d1 < 0 && d2 < 0 && d3 < 0);
}

inline double signed_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                              const Eigen::Vector2d& c) {
  const double d = std::min({segment_distance(p, a, b), segment_distance(p, b, c), segment_distance(p, c, a)});
  return inside_triangle(p, a, b, c) ? d : -d;
}

inline Image soft_silhouette(const Points2& uv, const Faces& faces, int w, int h, double sigma) {
  Image out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      double trans = 1.0;
      for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const double d = signed_distance(p, uv.row(faces(f, 0)).transpose(), uv.row(faces(f, 1)).transpose(),
                                         uv.row(faces(f, 2)).transpose());
        trans *= 1.0 - 1.0 / (1.0 + std::exp(-d / sigma));
      }
      out(y, x) = 1.0 - trans;
    }
  }
  return out;
}

inline avishape::BinaryMask hard_silhouette(const Points2& uv, const Faces& faces, int w, int h) {
  avishape::BinaryMask out = avishape::BinaryMask::Zero(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d p(x + 0.5, y + 0.5);
      for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        if (inside_triangle(p, uv.row(faces(f, 0)).transpose(), uv.row(faces(f, 1)).transpose(),
                            uv.row(faces(f, 2)).transpose())) {
          out(y, x) = 1;
          break;
        }
      }
    }
  }
  return out;
}

// Central difference of f along coordinate i.
inline double central_difference(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                  Eigen::Index i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

struct GradCheck {
  int checked = 0;
  int skipped = 0;  // near a kink: one-sided slopes disagree
  int failed = 0;
  double worst = 0.0;
};

// Compares analytic gradient entries against central differences. A
// coordinate sits near a non-differentiable point when its one-sided slopes
// disagree and either the disagreement does not shrink with the step, as it
// would for a smooth function (|fwd - bwd| ~ |f''| h), or the central
// difference still moves when the step shrinks. Such coordinates are skipped.
// The relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& analytic, const std::vector<Eigen::Index>& coords, double h,
                                double rel_tol, double floor, double kink_tol = 1e-2) {
  GradCheck r;
  const double f0 = f(x);
  auto slopes = [&](Eigen::Index i, double step, double& fwd, double& bwd) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    const double fp = f(xp), fm = f(xm);
    fwd = (fp - f0) / step;
    bwd = (f0 - fm) / step;
    return (fp - fm) / (2.0 * step);
  };
  for (Eigen::Index i : coords) {
    double fwd, bwd, fwd2, bwd2;
    const double num = slopes(i, h, fwd, bwd);
    const double scale = std::max({std::abs(fwd), std::abs(bwd), floor});
    const double d1 = std::abs(fwd - bwd);
    bool kink = d1 > kink_tol * scale;
    if (!kink && d1 > 1e-5 * scale) {
      // Smooth: the slope gap shrinks about 8x and the central difference
      // is already converged at h.
      const double num2 = slopes(i, h / 8.0, fwd2, bwd2);
      kink = std::abs(fwd2 - bwd2) > 0.25 * d1 || std::abs(num2 - num) > 0.25 * rel_tol * scale;
    }
    if (kink) {
      ++r.skipped;
      continue;
    }
    const double err = std::abs(analytic[i] - num) / std::max({std::abs(analytic[i]), std::abs(num), floor});
    r.worst = std::max(r.worst, err);
    ++r.checked;
    if (err > rel_tol) {
      ++r.failed;
      if (std::getenv("ORACLE_VERBOSE")) {
        std::fprintf(stderr, "grad mismatch at %ld: analytic %.12g numeric %.12g fwd %.12g bwd %.12g\n",
                     static_cast<long>(i), analytic[i], num, fwd, bwd);
      }
    }
  }
  return r;
}

inline std::vector<Eigen::Index> sample_coords(Eigen::Index n, int count, std::mt19937_64& rng) {
  std::vector<Eigen::Index> out;
  if (n <= count) {
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  for (int k = 0; k < count; ++k) out.push_back(pick(rng));
  return out;
}

// Independent LBS: homogeneous world transforms composed with Eigen::AngleAxis
// and applied through inverse bind matrices. Bone scales and part scales at 1.
inline Points3 lbs(const avishape::TemplateModel& t, const avishape::PoseParams& p, const Points3& rest) {
  const int nj = t.num_joints();
  std::vector<Eigen::Isometry3d> world(nj), bind(nj);
  for (int j : t.joint_order()) {
    const Eigen::Vector3d w = p.theta.segment<3>(3 * j);
    const Eigen::Matrix3d R =
        w.norm() > 0 ? Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix() : Eigen::Matrix3d::Identity();
    Eigen::Isometry3d local = Eigen::Isometry3d::Identity();
    local.linear() = R;
    const int par = t.parent()[j];
    const Eigen::Vector3d origin = par >= 0 ? Eigen::Vector3d(t.joints().row(par).transpose()) : Eigen::Vector3d::Zero();
    local.translation() = t.joints().row(j).transpose() - origin;
    world[j] = par >= 0 ? world[par] * local : local;
    bind[j] = Eigen::Isometry3d(Eigen::Translation3d(t.joints().row(j).transpose()));
  }
  Points3 out = Points3::Zero(rest.rows(), 3);
  for (int i = 0; i < rest.rows(); ++i) {
    for (const auto& e : t.skin_row(i)) {
      out.row(i) += e.weight * (world[e.index] * bind[e.index].inverse() * rest.row(i).transpose()).transpose();
    }
    out.row(i) += p.gamma.transpose();
  }
  return out;
}

struct Mesh2 {
  Points2 uv;
  Faces faces;
};

// Independent triangles scattered over (and slightly beyond) a w x h image.
inline Mesh2 random_triangles(std::mt19937_64& rng, int w, int h, int nf) {
  std::uniform_real_distribution<double> ux(-2.0, w + 2.0), uy(-2.0, h + 2.0);
  Mesh2 m;
  m.uv.resize(3 * nf, 2);
  m.faces.resize(nf, 3);
  for (int i = 0; i < 3 * nf; ++i) m.uv.row(i) << ux(rng), uy(rng);
  for (int f = 0; f < nf; ++f) m.faces.row(f) << 3 * f, 3 * f + 1, 3 * f + 2;
  return m;
}

}  // namespace oracle
