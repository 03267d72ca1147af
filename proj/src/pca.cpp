#include "avishape/pca.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>

namespace avishape {

Eigen::VectorXd Pca::project(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw InvalidInput("pca project: dimension mismatch");
  return components.transpose() * (x - mean);
}

Eigen::VectorXd Pca::reconstruct(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != components.cols()) throw InvalidInput("pca reconstruct: coefficient count mismatch");
  return mean + components * coeffs;
}

Pca fit_pca(const Eigen::MatrixXd& samples, int max_rank) {
  const Eigen::Index s = samples.rows();
  if (s < 2) throw InvalidInput("pca: need at least 2 samples");
  if (!samples.allFinite()) throw InvalidInput("pca: samples must be finite");
  Pca out;
  out.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd x = samples.rowwise() - out.mean.transpose();
  const Eigen::MatrixXd gram = x * x.transpose() / static_cast<double>(s - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd lambda = eig.eigenvalues().reverse();
  const Eigen::MatrixXd u = eig.eigenvectors().rowwise().reverse();

  const double total = std::max(gram.trace(), 0.0);
  Eigen::Index keep = s - 1;
  if (max_rank >= 0) keep = std::min<Eigen::Index>(keep, max_rank);
  Eigen::Index r = 0;
  while (r < keep && lambda[r] > 1e-12 * total && lambda[r] > 0.0) ++r;

  out.variances = lambda.head(r);
  Eigen::MatrixXd comp = x.transpose() * u.leftCols(r);
  for (Eigen::Index k = 0; k < r; ++k) comp.col(k) /= comp.col(k).norm();
  // one re-orthonormalization pass removes rounding drift
  if (r > 0) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(comp);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(comp.rows(), r);
    for (Eigen::Index k = 0; k < r; ++k) {
      if (q.col(k).dot(comp.col(k)) < 0.0) q.col(k) = -q.col(k);
    }
    comp = std::move(q);
  }
  out.components = std::move(comp);
  return out;
}

}  // namespace avishape
