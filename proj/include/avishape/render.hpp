#pragma once

#include "avishape/posing.hpp"
#include "avishape/types.hpp"

#include <Eigen/Core>

#include <optional>

namespace avishape {

/// Pinhole camera looking down +z. Pixel (col, row) covers
/// [col, col+1) x [row, row+1); its center is (col + 0.5, row + 0.5).
struct Camera {
  double focal = 0.0;
  Eigen::Vector2d principal = Eigen::Vector2d::Zero();
  int width = 0;
  int height = 0;

  /// Focal length 2x image width, principal point at the image center.
  static Camera for_image(int width, int height);
  void validate() const;
  bool operator==(const Camera&) const = default;
};

inline constexpr double kDefaultZNear = 1e-3;

/// u = f x / z + cx, v = f y / z + cy. Throws NumericalError naming the
/// first point with z <= z_near.
Points2 project(const Camera& camera, const Points3& points, double z_near = kDefaultZNear);

/// Accumulates J^T grad_uv into grad_xyz.
void project_backward(const Camera& camera, const Points3& points, const Points2& grad_uv, Points3& grad_xyz);

struct SoftRasterOptions {
  double sigma = 2.0;  // pixels
  /// Face-pixel pairs with signed distance below -cull_sigmas * sigma are
  /// skipped. Each skipped pair would contribute at most
  /// logistic(-cull_sigmas) (about 7e-13 at 28).
  double cull_sigmas = 28.0;
};

/// Per-pixel occupancy plus the cached log-transmittance sum needed by the
/// adjoint pass.
struct SoftRaster {
  Image occupancy;           // H x W in (0, 1)
  Image log_transmittance;   // sum_f log(1 - D_f)
};

/// Soft silhouette of projected triangles: D_f(p) = logistic(d(p, f) / sigma)
/// with d the signed distance to the triangle boundary (positive inside),
/// aggregated as O(p) = 1 - prod_f (1 - D_f(p)).
SoftRaster soft_rasterize(const Points2& projected, const Faces& faces, int width, int height,
                          const SoftRasterOptions& options);

/// Gradient of sum_p grad_occupancy(p) * O(p) with respect to projected
/// vertex positions.
Points2 soft_rasterize_backward(const Points2& projected, const Faces& faces, const SoftRaster& raster,
                                const Image& grad_occupancy, const SoftRasterOptions& options);

Image render_soft_silhouette(const PosedMesh& mesh, const Camera& camera, double sigma);

/// Pixel is set iff its center lies inside a projected triangle; boundary
/// ties follow the top-left rule.
BinaryMask rasterize_hard_2d(const Points2& projected, const Faces& faces, int width, int height);
BinaryMask rasterize_hard(const PosedMesh& mesh, const Camera& camera);

/// Depth of the nearest surface hit by the camera ray through pixel
/// coordinate uv, if any.
std::optional<double> first_hit_depth(const PosedMesh& mesh, const Camera& camera, const Eigen::Vector2d& uv);

/// Signed distance from p to the boundary of triangle (a, b, c), positive
/// inside. Degenerate triangles have no inside.
double signed_distance_to_triangle(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                                   const Eigen::Vector2d& c);

}  // namespace avishape
