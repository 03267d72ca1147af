#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace avishape {

/// Row-major N x 3 point set. Row-major storage makes the flat 3N view
/// (x0, y0, z0, x1, ...) a zero-copy map.
using Points3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// H x W image, indexed (row, col). Row-major so that raw dumps are scanlines.
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BinaryMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<Eigen::VectorXd> flat(Points3& p) { return {p.data(), p.size()}; }
inline Eigen::Map<const Eigen::VectorXd> flat(const Points3& p) { return {p.data(), p.size()}; }

inline Points3 unflatten(const Eigen::VectorXd& v) {
  return Eigen::Map<const Points3>(v.data(), v.size() / 3, 3);
}

/// Raised for malformed inputs: dimension mismatches, violated invariants,
/// unreadable files. The message names the offending field.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a usable result
/// (non-finite objective, projection behind the camera).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace avishape
