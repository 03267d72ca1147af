#include "avishape/synthetic_template.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

namespace avishape {

namespace {

using Vec3 = Eigen::Vector3d;

// Superellipse profile: 1 at the middle, 0 at both poles.
double bulge(double t, double p) { return std::pow(std::max(0.0, 1.0 - std::pow(std::abs(2.0 * t - 1.0), p)), 1.0 / p); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

struct Tube {
  Vec3 a, b;
  int rings = 4;
  int segs = 8;  // even
  std::function<Eigen::Vector2d(double)> radius;  // (lateral, vertical) at t in (0, 1)
};

struct Piece {
  std::string name;
  std::vector<int> vertices;
  std::vector<double> t;  // axial parameter of every vertex
  int segs = 0;
  int rings = 0;
};

class MeshBuilder {
 public:
  Piece add_tube(const std::string& name, const Tube& tube) {
    Piece piece;
    piece.name = name;
    piece.segs = tube.segs;
    piece.rings = tube.rings;
    const Vec3 d = (tube.b - tube.a).normalized();
    Vec3 ex = Vec3::UnitX() - Vec3::UnitX().dot(d) * d;
    ex.normalize();
    const Vec3 ey = d.cross(ex);

    const int first = static_cast<int>(verts_.size());
    auto push = [&](const Vec3& p, double t) {
      piece.vertices.push_back(static_cast<int>(verts_.size()));
      piece.t.push_back(t);
      verts_.push_back(p);
    };
    push(tube.a, 0.0);
    for (int r = 1; r <= tube.rings; ++r) {
      const double t = static_cast<double>(r) / (tube.rings + 1);
      const Eigen::Vector2d rad = tube.radius(t);
      const Vec3 c = tube.a + t * (tube.b - tube.a);
      for (int k = 0; k < tube.segs; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / tube.segs;
        push(c + rad.x() * std::cos(phi) * ex + rad.y() * std::sin(phi) * ey, t);
      }
    }
    push(tube.b, 1.0);

    const int S = tube.segs;
    auto ring = [&](int r, int k) { return first + 1 + (r - 1) * S + ((k % S) + S) % S; };
    const int pole_b = first + 1 + tube.rings * S;
    for (int k = 0; k < S; ++k) faces_.push_back({first, ring(1, k + 1), ring(1, k)});
    for (int r = 1; r < tube.rings; ++r) {
      for (int k = 0; k < S; ++k) {
        faces_.push_back({ring(r, k), ring(r, k + 1), ring(r + 1, k + 1)});
        faces_.push_back({ring(r, k), ring(r + 1, k + 1), ring(r + 1, k)});
      }
    }
    for (int k = 0; k < S; ++k) faces_.push_back({ring(tube.rings, k), ring(tube.rings, k + 1), pole_b});

    // midline tubes mirror onto themselves: phi -> pi - phi
    if (std::abs(tube.a.x()) < 1e-12 && std::abs(tube.b.x()) < 1e-12) {
      pairs_.emplace_back(first, first);
      pairs_.emplace_back(pole_b, pole_b);
      for (int r = 1; r <= tube.rings; ++r) {
        for (int k = 0; k < S; ++k) {
          const int m = ((S / 2 - k) % S + S) % S;
          if (k <= m) pairs_.emplace_back(ring(r, k), ring(r, m));
        }
      }
    }
    return piece;
  }

  /// Mirror copy across x = 0 with reversed winding; pairs each vertex with its source.
  Piece add_mirror(const std::string& name, const Piece& src) {
    Piece piece = src;
    piece.name = name;
    piece.vertices.clear();
    const int offset = static_cast<int>(verts_.size()) - src.vertices.front();
    for (int v : src.vertices) {
      Vec3 p = verts_[v];
      p.x() = -p.x();
      piece.vertices.push_back(static_cast<int>(verts_.size()));
      pairs_.emplace_back(v, static_cast<int>(verts_.size()));
      verts_.push_back(p);
    }
    const std::size_t nf = faces_.size();
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& tri = faces_[f];
      if (tri[0] < src.vertices.front() || tri[0] > src.vertices.back()) continue;
      faces_.push_back({tri[0] + offset, tri[2] + offset, tri[1] + offset});
    }
    return piece;
  }

  void symmetrize() {
    for (auto [p, q] : pairs_) {
      if (p == q) {
        verts_[p].x() = 0.0;
        continue;
      }
      const double x = 0.5 * (verts_[p].x() - verts_[q].x());
      const double y = 0.5 * (verts_[p].y() + verts_[q].y());
      const double z = 0.5 * (verts_[p].z() + verts_[q].z());
      verts_[p] = Vec3(x, y, z);
      verts_[q] = Vec3(-x, y, z);
    }
  }

  std::vector<Vec3> verts_;
  std::vector<std::array<int, 3>> faces_;
  std::vector<std::pair<int, int>> pairs_;
};

int nearest_in(const std::vector<Vec3>& verts, const Piece& piece, const Vec3& target) {
  int best = piece.vertices.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (int v : piece.vertices) {
    const double d = (verts[v] - target).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = v;
    }
  }
  return best;
}

Vec3 mirror(Vec3 p) {
  p.x() = -p.x();
  return p;
}

enum Joint { kRoot, kSpine, kNeck, kHead, kBeak, kTail1, kTail2, kLegL, kFootL, kLegR, kFootR, kWingL, kWingR, kJoints };

}  // namespace

TemplateData make_synthetic_bird_data(const SyntheticTemplateOptions& options) {
  const double res = std::max(0.25, options.resolution);
  auto rings = [&](int base) { return std::max(2, static_cast<int>(std::lround(base * res))); };
  auto segs = [&](int base) { return std::max(4, 2 * static_cast<int>(std::lround(base * res / 2.0))); };

  MeshBuilder mb;
  Piece body = mb.add_tube("body", {Vec3(0, 0.0, -0.32), Vec3(0, -0.02, 0.26), rings(8), segs(12), [](double t) {
                                      const double s = bulge(t, 2.2);
                                      return Eigen::Vector2d(0.13 * s, 0.15 * s);
                                    }});
  Piece neck = mb.add_tube("neck", {Vec3(0, -0.06, 0.17), Vec3(0, -0.22, 0.31), rings(2), segs(8), [](double t) {
                                      const double s = bulge(t, 4.0);
                                      return Eigen::Vector2d(0.055 * s, 0.055 * s);
                                    }});
  Piece head = mb.add_tube("head", {Vec3(0, -0.22, 0.25), Vec3(0, -0.24, 0.42), rings(5), segs(8), [](double t) {
                                      const double s = bulge(t, 2.0);
                                      return Eigen::Vector2d(0.065 * s, 0.075 * s);
                                    }});
  Piece beak = mb.add_tube("beak", {Vec3(0, -0.225, 0.40), Vec3(0, -0.215, 0.53), rings(3), segs(6), [](double t) {
                                      const double s = 0.03 * (1.0 - t);
                                      return Eigen::Vector2d(s, 0.9 * s);
                                    }});
  Piece tail = mb.add_tube("tail", {Vec3(0, -0.03, -0.24), Vec3(0, 0.0, -0.56), rings(5), segs(8), [](double t) {
                                      const double s = bulge(t, 4.0);
                                      return Eigen::Vector2d(0.08 * (0.6 + 0.4 * t) * s, 0.016 * s);
                                    }});
  Piece leg_l = mb.add_tube("leg_l", {Vec3(0.06, 0.08, 0.0), Vec3(0.06, 0.27, 0.01), rings(2), segs(6), [](double t) {
                                        const double s = bulge(t, 4.0);
                                        return Eigen::Vector2d(0.02 * s, 0.02 * s);
                                      }});
  Piece foot_l = mb.add_tube("foot_l", {Vec3(0.06, 0.27, -0.02), Vec3(0.06, 0.285, 0.08), rings(2), segs(6),
                                        [](double t) {
                                          const double s = bulge(t, 4.0);
                                          return Eigen::Vector2d(0.018 * s, 0.008 * s);
                                        }});
  Piece wing_l = mb.add_tube("wing_l", {Vec3(0.125, -0.07, 0.16), Vec3(0.10, -0.02, -0.34), rings(5), segs(6),
                                        [](double t) {
                                          const double s = bulge(t, 2.0);
                                          return Eigen::Vector2d(0.018 * s, 0.075 * s * (1.0 - 0.4 * t));
                                        }});
  Piece leg_r = mb.add_mirror("leg_r", leg_l);
  Piece foot_r = mb.add_mirror("foot_r", foot_l);
  Piece wing_r = mb.add_mirror("wing_r", wing_l);
  mb.symmetrize();

  const auto& V = mb.verts_;
  const int n = static_cast<int>(V.size());

  TemplateData data;
  data.vertices.resize(n, 3);
  for (int i = 0; i < n; ++i) data.vertices.row(i) = V[i].transpose();
  data.faces.resize(static_cast<Eigen::Index>(mb.faces_.size()), 3);
  for (std::size_t f = 0; f < mb.faces_.size(); ++f) {
    for (int k = 0; k < 3; ++k) data.faces(static_cast<Eigen::Index>(f), k) = mb.faces_[f][k];
  }

  data.joint_names = {"root", "spine", "neck", "head", "beak", "tail1", "tail2",
                      "leg_l", "foot_l", "leg_r", "foot_r", "wing_l", "wing_r"};
  data.parent = {-1, kRoot, kSpine, kNeck, kHead, kRoot, kTail1, kRoot, kLegL, kRoot, kLegR, kSpine, kSpine};
  const std::array<Vec3, kJoints> joints = {
      Vec3(0, 0.0, -0.05),      Vec3(0, -0.03, 0.14),      Vec3(0, -0.08, 0.20),     Vec3(0, -0.23, 0.30),
      Vec3(0, -0.225, 0.40),    Vec3(0, -0.02, -0.26),     Vec3(0, -0.01, -0.40),    Vec3(0.06, 0.08, 0.0),
      Vec3(0.06, 0.27, 0.0),    mirror(Vec3(0.06, 0.08, 0.0)), mirror(Vec3(0.06, 0.27, 0.0)),
      Vec3(0.12, -0.07, 0.14),  mirror(Vec3(0.12, -0.07, 0.14))};
  data.joints.resize(kJoints, 3);
  for (int j = 0; j < kJoints; ++j) data.joints.row(j) = joints[j].transpose();

  auto rigid = [&](const Piece& piece, int joint) {
    for (int v : piece.vertices) data.skin_weights.push_back({v, joint, 1.0});
  };
  auto blend = [&](const Piece& piece, int j0, int j1, const std::function<double(int, double)>& w1) {
    for (std::size_t i = 0; i < piece.vertices.size(); ++i) {
      const int v = piece.vertices[i];
      const double b = w1(v, piece.t[i]);
      if (b < 1.0) data.skin_weights.push_back({v, j0, 1.0 - b});
      if (b > 0.0) data.skin_weights.push_back({v, j1, b});
    }
  };
  blend(body, kRoot, kSpine, [&](int v, double) { return smoothstep((V[v].z() + 0.1) / 0.3); });
  blend(neck, kSpine, kNeck, [](int, double t) { return smoothstep(t * 1.5); });
  rigid(head, kHead);
  rigid(beak, kBeak);
  blend(tail, kTail1, kTail2, [](int, double t) { return smoothstep((t - 0.2) / 0.6); });
  rigid(leg_l, kLegL);
  rigid(foot_l, kFootL);
  rigid(leg_r, kLegR);
  rigid(foot_r, kFootR);
  rigid(wing_l, kWingL);
  rigid(wing_r, kWingR);

  auto kp = [&](const std::string& name, int v) { data.keypoints.push_back({name, {v}}); };
  kp("beak_tip", beak.vertices.back());
  kp("crown", nearest_in(V, head, Vec3(0, -0.32, 0.34)));
  kp("nape", nearest_in(V, head, Vec3(0, -0.28, 0.25)));
  kp("left_eye", nearest_in(V, head, Vec3(0.07, -0.25, 0.36)));
  kp("right_eye", nearest_in(V, head, Vec3(-0.07, -0.25, 0.36)));
  kp("throat", nearest_in(V, neck, Vec3(0, -0.09, 0.28)));
  kp("breast", nearest_in(V, body, Vec3(0, 0.09, 0.2)));
  kp("belly", nearest_in(V, body, Vec3(0, 0.16, 0.0)));
  kp("back", nearest_in(V, body, Vec3(0, -0.16, 0.0)));
  kp("rump", nearest_in(V, body, Vec3(0, -0.1, -0.26)));
  kp("tail_base", nearest_in(V, tail, Vec3(0, -0.05, -0.3)));
  kp("tail_tip", tail.vertices.back());
  kp("left_wing_tip", wing_l.vertices.back());
  kp("right_wing_tip", wing_r.vertices.back());
  kp("left_knee", leg_l.vertices.front());
  kp("right_knee", leg_r.vertices.front());
  kp("left_foot", foot_l.vertices.back());
  kp("right_foot", foot_r.vertices.back());

  data.parts = {{"body", body.vertices, -1},   {"neck", neck.vertices, -1},     {"head", head.vertices, -1},
                {"beak", beak.vertices, kBeak}, {"tail", tail.vertices, kTail1}, {"wing_l", wing_l.vertices, -1},
                {"wing_r", wing_r.vertices, -1}};
  std::vector<int> legs_l = leg_l.vertices, legs_r = leg_r.vertices;
  legs_l.insert(legs_l.end(), foot_l.vertices.begin(), foot_l.vertices.end());
  legs_r.insert(legs_r.end(), foot_r.vertices.begin(), foot_r.vertices.end());
  data.parts.push_back({"leg_l", legs_l, -1});
  data.parts.push_back({"leg_r", legs_r, -1});

  data.symmetry_pairs = mb.pairs_;
  data.rigidity = Eigen::VectorXd::Ones(n);
  for (int v : legs_l) data.rigidity[v] = 10.0;
  for (int v : legs_r) data.rigidity[v] = 10.0;
  return data;
}

TemplateModel make_synthetic_bird(const SyntheticTemplateOptions& options) {
  return TemplateModel(make_synthetic_bird_data(options));
}

PosePrior make_synthetic_bird_prior(const TemplateModel& tmpl) {
  const int nj = tmpl.num_joints();
  if (nj != kJoints) throw InvalidInput("synthetic prior: template is not the synthetic bird");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3 * nj);
  mean.segment<3>(3 * kRoot) = Eigen::Vector3d(0.0, std::numbers::pi / 2.0, 0.0);
  mean.segment<3>(3 * kNeck) = Eigen::Vector3d(0.1, 0.0, 0.0);
  const std::array<Eigen::Vector3d, kJoints> sd = {
      Eigen::Vector3d(0.50, 1.00, 0.50),  // root
      Eigen::Vector3d(0.08, 0.05, 0.05),  // spine
      Eigen::Vector3d(0.20, 0.12, 0.08),  // neck
      Eigen::Vector3d(0.20, 0.20, 0.10),  // head
      Eigen::Vector3d(0.03, 0.03, 0.03),  // beak
      Eigen::Vector3d(0.15, 0.10, 0.05),  // tail1
      Eigen::Vector3d(0.10, 0.08, 0.05),  // tail2
      Eigen::Vector3d(0.20, 0.05, 0.08),  // leg_l
      Eigen::Vector3d(0.15, 0.05, 0.05),  // foot_l
      Eigen::Vector3d(0.20, 0.05, 0.08),  // leg_r
      Eigen::Vector3d(0.15, 0.05, 0.05),  // foot_r
      Eigen::Vector3d(0.06, 0.06, 0.06),  // wing_l
      Eigen::Vector3d(0.06, 0.06, 0.06),  // wing_r
  };
  Eigen::VectorXd var(3 * nj);
  for (int j = 0; j < nj; ++j) var.segment<3>(3 * j) = sd[j].cwiseProduct(sd[j]);
  Eigen::VectorXd alpha_var = Eigen::VectorXd::Constant(nj, 0.04 * 0.04);
  alpha_var[kNeck] = 0.08 * 0.08;
  return {mean, var.asDiagonal().toDenseMatrix(), Eigen::VectorXd::Ones(nj), alpha_var.asDiagonal().toDenseMatrix()};
}

}  // namespace avishape
