#include "avishape/synth_db.hpp"

#include <limits>
#include <random>

namespace avishape {

double canonical_depth(const TemplateModel& tmpl, const Camera& camera) {
  camera.validate();
  return camera.focal * tmpl.body_length() / (0.75 * camera.width);
}

Eigen::Vector3d centering_translation(const TemplateModel& tmpl, const PoseParams& params, const Points3& rest,
                                      double depth) {
  PoseParams p = params;
  p.gamma.setZero();
  const Points3 posed = pose_mesh(tmpl, p, rest).vertices;
  return Eigen::Vector3d(0.0, 0.0, depth) - posed.colwise().mean().transpose();
}

Points2 normalize_keypoints(const Points2& keypoints, const BoundingBox& box) {
  if (!(box.size() > 0.0)) throw InvalidInput("normalize keypoints: box has zero size");
  const Eigen::RowVector2d c = box.center().transpose();
  return (keypoints.rowwise() - c) / box.size();
}

SynthDb build_synth_db(const TemplateModel& tmpl, const PosePrior& prior, const Camera& camera, int n,
                       std::uint64_t seed) {
  if (n < 1) throw InvalidInput("synth db: n must be at least 1");
  if (prior.num_joints() != tmpl.num_joints()) throw InvalidInput("synth db: prior joint count differs from template");
  SynthDb db;
  db.camera = camera;
  db.depth = canonical_depth(tmpl, camera);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int nj = tmpl.num_joints();
  auto draw = [&](Eigen::Index d) {
    Eigen::VectorXd z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
    return z;
  };
  for (int s = 0; s < n; ++s) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      PoseParams p = PoseParams::neutral(nj);
      p.theta = prior.theta_mean() + prior.theta_llt().matrixL() * draw(3 * nj);
      p.alpha = prior.alpha_mean() + prior.alpha_llt().matrixL() * draw(nj);
      if ((p.alpha.array() <= 0.0).any()) continue;
      p.gamma = centering_translation(tmpl, p, tmpl.vertices(), db.depth);
      const PosedMesh mesh = pose_mesh(tmpl, p, tmpl.vertices());
      if ((mesh.vertices.col(2).array() <= kDefaultZNear).any()) continue;
      const BoundingBox box = mask_bbox(rasterize_hard(mesh, camera));
      if (!(box.size() > 0.0)) continue;
      db.keypoints.push_back(normalize_keypoints(project(camera, keypoint_positions(tmpl, mesh.vertices)), box));
      db.boxes.push_back(box);
      db.params.push_back(std::move(p));
      ok = true;
    }
    if (!ok) throw NumericalError("synth db: could not draw a valid pose in 100 attempts");
  }
  return db;
}

PoseParams init_pose(const Points2& keypoints, const std::vector<bool>& visible, const BoundingBox& box,
                     const SynthDb& db) {
  if (db.size() == 0) throw InvalidInput("init_pose: synthetic database is empty");
  if (static_cast<Eigen::Index>(visible.size()) != keypoints.rows()) {
    throw InvalidInput("init_pose: keypoint and visibility counts differ");
  }
  int nvis = 0;
  for (bool v : visible) nvis += v;
  if (nvis < 4) throw InvalidInput("init_pose: need at least 4 visible keypoints");
  const Points2 q = normalize_keypoints(keypoints, box);
  if (q.rows() != db.keypoints.front().rows()) throw InvalidInput("init_pose: keypoint count differs from database");

  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int s = 0; s < db.size(); ++s) {
    double d = 0.0;
    for (Eigen::Index k = 0; k < q.rows(); ++k) {
      if (visible[k]) d += (q.row(k) - db.keypoints[s].row(k)).norm();
    }
    d /= nvis;
    if (d < best_d) {
      best_d = d;
      best = s;
    }
  }

  PoseParams p = db.params[best];
  const BoundingBox& b = db.boxes[best];
  if (b == box) return p;
  // Move the centroid so that its image offset from the box center scales
  // with the box, and its depth scales inversely with the box size.
  const Camera& cam = db.camera;
  const double k = box.size() / b.size();
  const double z = db.depth / k;
  const Eigen::Vector2d offset = b.center() - cam.principal;
  const Eigen::Vector2d uv = box.center() - k * offset;
  const Eigen::Vector3d c((uv.x() - cam.principal.x()) * z / cam.focal, (uv.y() - cam.principal.y()) * z / cam.focal,
                          z);
  p.gamma += c - Eigen::Vector3d(0.0, 0.0, db.depth);
  return p;
}

}  // namespace avishape
