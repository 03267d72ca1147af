#pragma once

#include "avishape/types.hpp"

#include <Eigen/Core>

namespace avishape {

/// Principal components of a sample set. components has D rows and one
/// orthonormal column per retained direction; variances are sorted
/// descending and strictly positive.
struct Pca {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd variances;

  int rank() const { return static_cast<int>(components.cols()); }
  /// Coefficients of x in the retained basis.
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  Eigen::VectorXd reconstruct(const Eigen::VectorXd& coeffs) const;
};

/// PCA of the rows of `samples` (S x D) via the S x S Gram matrix, keeping
/// at most min(max_rank, S - 1) directions and dropping directions whose
/// variance is below a relative 1e-12 of the total (identical samples give
/// rank 0). max_rank < 0 keeps every nonzero direction. Throws for S < 2.
Pca fit_pca(const Eigen::MatrixXd& samples, int max_rank = -1);

}  // namespace avishape
