#include "avishape/render.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace avishape {

Camera Camera::for_image(int width, int height) {
  Camera c;
  c.focal = 2.0 * width;
  c.principal = Eigen::Vector2d(0.5 * width, 0.5 * height);
  c.width = width;
  c.height = height;
  return c;
}

void Camera::validate() const {
  if (!(focal > 0.0)) throw InvalidInput("camera: focal must be positive");
  if (width <= 0 || height <= 0) throw InvalidInput("camera: image size must be positive");
  if (!principal.allFinite()) throw InvalidInput("camera: principal point must be finite");
}

Points2 project(const Camera& camera, const Points3& points, double z_near) {
  Points2 out(points.rows(), 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double z = points(i, 2);
    if (!(z > z_near)) {
      throw NumericalError("project: point " + std::to_string(i) + " lies at or behind z_near (z = " +
                           std::to_string(z) + ")");
    }
    out(i, 0) = camera.focal * points(i, 0) / z + camera.principal.x();
    out(i, 1) = camera.focal * points(i, 1) / z + camera.principal.y();
  }
  return out;
}

void project_backward(const Camera& camera, const Points3& points, const Points2& grad_uv, Points3& grad_xyz) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double x = points(i, 0), y = points(i, 1), z = points(i, 2);
    const double gu = grad_uv(i, 0), gv = grad_uv(i, 1);
    const double fz = camera.focal / z;
    grad_xyz(i, 0) += gu * fz;
    grad_xyz(i, 1) += gv * fz;
    grad_xyz(i, 2) -= (gu * x + gv * y) * fz / z;
  }
}

namespace {

struct FaceGeom {
  double p[3][2];
  double e[3][2];   // edge k: p[k+1] - p[k]
  double inv_ee[3];  // 1 / |e_k|^2, 0 for a zero-length edge
  double area2;
  double xmin, xmax, ymin, ymax;
};

std::vector<FaceGeom> face_geometry(const Points2& proj, const Faces& faces) {
  std::vector<FaceGeom> out(static_cast<std::size_t>(faces.rows()));
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    FaceGeom& g = out[f];
    for (int k = 0; k < 3; ++k) {
      g.p[k][0] = proj(faces(f, k), 0);
      g.p[k][1] = proj(faces(f, k), 1);
    }
    for (int k = 0; k < 3; ++k) {
      const int n = (k + 1) % 3;
      g.e[k][0] = g.p[n][0] - g.p[k][0];
      g.e[k][1] = g.p[n][1] - g.p[k][1];
      const double ee = g.e[k][0] * g.e[k][0] + g.e[k][1] * g.e[k][1];
      g.inv_ee[k] = ee > 0.0 ? 1.0 / ee : 0.0;
    }
    g.area2 = g.e[0][0] * (g.p[2][1] - g.p[0][1]) - g.e[0][1] * (g.p[2][0] - g.p[0][0]);
    g.xmin = std::min({g.p[0][0], g.p[1][0], g.p[2][0]});
    g.xmax = std::max({g.p[0][0], g.p[1][0], g.p[2][0]});
    g.ymin = std::min({g.p[0][1], g.p[1][1], g.p[2][1]});
    g.ymax = std::max({g.p[0][1], g.p[1][1], g.p[2][1]});
  }
  return out;
}

struct Distance {
  double d;      // signed, positive inside
  int edge;      // closest edge k: (p[k], p[k+1])
  double t;      // closest point parameter on that edge
  double sn[2];  // gradient of d with respect to the query point
  bool culled;   // outside and farther than the cull radius; d not computed
};

inline Distance face_distance(const FaceGeom& g, double px, double py, bool want_normal,
                              double reach2 = std::numeric_limits<double>::infinity()) {
  Distance r{};
  double best = std::numeric_limits<double>::infinity();
  double bdx = 0.0, bdy = 0.0;
  bool inside = g.area2 != 0.0;
  const double s = g.area2 > 0.0 ? 1.0 : -1.0;
  for (int k = 0; k < 3; ++k) {
    const double ex = g.e[k][0], ey = g.e[k][1];
    const double wx = px - g.p[k][0], wy = py - g.p[k][1];
    inside = inside && s * (ex * wy - ey * wx) > 0.0;
    const double t = std::clamp((wx * ex + wy * ey) * g.inv_ee[k], 0.0, 1.0);
    const double dx = wx - t * ex, dy = wy - t * ey;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      r.edge = k;
      r.t = t;
      bdx = dx;
      bdy = dy;
    }
  }
  if (!inside && best > reach2) {
    r.culled = true;
    return r;
  }
  const double u = std::sqrt(best);
  r.d = inside ? u : -u;
  if (want_normal) {
    if (u > 0.0) {
      const double sg = inside ? 1.0 : -1.0;
      r.sn[0] = sg * bdx / u;
      r.sn[1] = sg * bdy / u;
    } else {
      // on the boundary: inward normal of the closest edge
      const double nx = -g.e[r.edge][1], ny = g.e[r.edge][0];
      const double len = std::hypot(nx, ny);
      const double so = g.area2 < 0.0 ? -1.0 : 1.0;
      r.sn[0] = len > 0.0 ? so * nx / len : 0.0;
      r.sn[1] = len > 0.0 ? so * ny / len : 0.0;
    }
  }
  return r;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Fn>
void for_each_pair(const std::vector<FaceGeom>& geom, int width, int height, double reach, Fn&& fn) {
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    for (std::size_t f = 0; f < geom.size(); ++f) {
      const FaceGeom& g = geom[f];
      if (py < g.ymin - reach || py > g.ymax + reach) continue;
      const int x0 = std::max(0, static_cast<int>(std::ceil(g.xmin - reach - 0.5)));
      const int x1 = std::min(width - 1, static_cast<int>(std::floor(g.xmax + reach - 0.5)));
      for (int x = x0; x <= x1; ++x) fn(y, x, f, g);
    }
  }
}

void check_options(const SoftRasterOptions& o) {
  if (!(o.sigma > 0.0)) throw InvalidInput("soft raster: sigma must be positive");
  if (!(o.cull_sigmas > 0.0)) throw InvalidInput("soft raster: cull_sigmas must be positive");
}

}  // namespace

SoftRaster soft_rasterize(const Points2& projected, const Faces& faces, int width, int height,
                          const SoftRasterOptions& options) {
  check_options(options);
  const auto geom = face_geometry(projected, faces);
  const double reach = options.cull_sigmas * options.sigma;
  const double reach2 = reach * reach;
  const double inv_sigma = 1.0 / options.sigma;
  SoftRaster r;
  r.log_transmittance = Image::Zero(height, width);
  for_each_pair(geom, width, height, reach, [&](int y, int x, std::size_t, const FaceGeom& g) {
    const Distance d = face_distance(g, x + 0.5, y + 0.5, false, reach2);
    if (d.culled) return;
    r.log_transmittance(y, x) -= softplus(d.d * inv_sigma);
  });
  r.occupancy = -r.log_transmittance.array().unaryExpr([](double l) { return std::expm1(l); });
  return r;
}

Points2 soft_rasterize_backward(const Points2& projected, const Faces& faces, const SoftRaster& raster,
                                const Image& grad_occupancy, const SoftRasterOptions& options) {
  check_options(options);
  const int height = static_cast<int>(raster.occupancy.rows());
  const int width = static_cast<int>(raster.occupancy.cols());
  if (grad_occupancy.rows() != height || grad_occupancy.cols() != width) {
    throw InvalidInput("soft raster backward: gradient image size mismatch");
  }
  const auto geom = face_geometry(projected, faces);
  const double reach = options.cull_sigmas * options.sigma;
  const double reach2 = reach * reach;
  const double inv_sigma = 1.0 / options.sigma;
  const Image transmittance = raster.log_transmittance.array().exp();

  Points2 grad = Points2::Zero(projected.rows(), 2);
  for_each_pair(geom, width, height, reach, [&](int y, int x, std::size_t f, const FaceGeom& g) {
    const double go = grad_occupancy(y, x);
    if (go == 0.0) return;
    const Distance d = face_distance(g, x + 0.5, y + 0.5, true, reach2);
    if (d.culled) return;
    // dO/dd = P * logistic(d / sigma) / sigma
    const double gd = go * transmittance(y, x) * logistic(d.d * inv_sigma) * inv_sigma;
    if (gd == 0.0) return;
    const int a = faces(static_cast<Eigen::Index>(f), d.edge);
    const int b = faces(static_cast<Eigen::Index>(f), (d.edge + 1) % 3);
    grad(a, 0) -= gd * (1.0 - d.t) * d.sn[0];
    grad(a, 1) -= gd * (1.0 - d.t) * d.sn[1];
    grad(b, 0) -= gd * d.t * d.sn[0];
    grad(b, 1) -= gd * d.t * d.sn[1];
  });
  return grad;
}

Image render_soft_silhouette(const PosedMesh& mesh, const Camera& camera, double sigma) {
  camera.validate();
  if (mesh.vertices.rows() == 0 || mesh.faces.rows() == 0) throw InvalidInput("render: mesh is empty");
  SoftRasterOptions opts;
  opts.sigma = sigma;
  return soft_rasterize(project(camera, mesh.vertices), mesh.faces, camera.width, camera.height, opts).occupancy;
}

double signed_distance_to_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                   const Eigen::Vector2d& c) {
  Points2 pts(3, 2);
  pts.row(0) = a.transpose();
  pts.row(1) = b.transpose();
  pts.row(2) = c.transpose();
  Faces f(1, 3);
  f << 0, 1, 2;
  return face_distance(face_geometry(pts, f)[0], p.x(), p.y(), false).d;
}

BinaryMask rasterize_hard_2d(const Points2& projected, const Faces& faces, int width, int height) {
  BinaryMask mask = BinaryMask::Zero(height, width);
  const auto geom = face_geometry(projected, faces);
  for (const FaceGeom& g : geom) {
    if (g.area2 == 0.0) continue;
    const double sg = g.area2 > 0.0 ? 1.0 : -1.0;
    const int x0 = std::max(0, static_cast<int>(std::ceil(g.xmin - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(g.xmax - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(g.ymin - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(g.ymax - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        bool in = true;
        for (int k = 0; k < 3 && in; ++k) {
          const double* a = g.p[k];
          const double* b = g.p[(k + 1) % 3];
          const double ex = b[0] - a[0], ey = b[1] - a[1];
          const double e = sg * (ex * (py - a[1]) - ey * (px - a[0]));
          if (e > 0.0) continue;
          if (e < 0.0) {
            in = false;
            continue;
          }
          // on the edge line: keep if nudging by (+eps, +eps^2) enters the triangle
          const double dx = -sg * ey, dy = sg * ex;
          in = dx > 0.0 || (dx == 0.0 && dy > 0.0);
        }
        if (in) mask(y, x) = 1;
      }
    }
  }
  return mask;
}

BinaryMask rasterize_hard(const PosedMesh& mesh, const Camera& camera) {
  camera.validate();
  if (mesh.faces.rows() == 0) return BinaryMask::Zero(camera.height, camera.width);
  return rasterize_hard_2d(project(camera, mesh.vertices), mesh.faces, camera.width, camera.height);
}

std::optional<double> first_hit_depth(const PosedMesh& mesh, const Camera& camera, const Eigen::Vector2d& uv) {
  const Eigen::Vector3d dir((uv.x() - camera.principal.x()) / camera.focal,
                            (uv.y() - camera.principal.y()) / camera.focal, 1.0);
  std::optional<double> best;
  for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
    const Eigen::Vector3d v0 = mesh.vertices.row(mesh.faces(f, 0)).transpose();
    const Eigen::Vector3d e1 = mesh.vertices.row(mesh.faces(f, 1)).transpose() - v0;
    const Eigen::Vector3d e2 = mesh.vertices.row(mesh.faces(f, 2)).transpose() - v0;
    const Eigen::Vector3d h = dir.cross(e2);
    const double det = e1.dot(h);
    if (std::abs(det) < 1e-15) continue;
    const double inv = 1.0 / det;
    const Eigen::Vector3d s = -v0;
    const double u = inv * s.dot(h);
    if (u < 0.0 || u > 1.0) continue;
    const Eigen::Vector3d q = s.cross(e1);
    const double v = inv * dir.dot(q);
    if (v < 0.0 || u + v > 1.0) continue;
    const double t = inv * e2.dot(q);
    if (t > 0.0 && (!best || t < *best)) best = t;
  }
  return best;
}

}  // namespace avishape
