#include "avishape/prior.hpp"

#include "avishape/types.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace avishape {

namespace {

void check_spd(const Eigen::MatrixXd& cov, Eigen::Index n, const std::string& name) {
  if (cov.rows() != n || cov.cols() != n) throw InvalidInput("prior: " + name + " covariance has wrong size");
  if (!cov.allFinite()) throw InvalidInput("prior: " + name + " covariance is not finite");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff())) {
    throw InvalidInput("prior: " + name + " covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw InvalidInput("prior: " + name + " covariance is not positive definite");
  }
}

}  // namespace

PosePrior::PosePrior(Eigen::VectorXd theta_mean, Eigen::MatrixXd theta_cov, Eigen::VectorXd alpha_mean,
                     Eigen::MatrixXd alpha_cov)
    : theta_mean_(std::move(theta_mean)),
      alpha_mean_(std::move(alpha_mean)),
      theta_cov_(std::move(theta_cov)),
      alpha_cov_(std::move(alpha_cov)) {
  if (theta_mean_.size() != 3 * alpha_mean_.size()) throw InvalidInput("prior: theta mean must have 3J entries");
  check_spd(theta_cov_, theta_mean_.size(), "theta");
  check_spd(alpha_cov_, alpha_mean_.size(), "alpha");
  theta_llt_.compute(theta_cov_);
  alpha_llt_.compute(alpha_cov_);
}

PosePrior PosePrior::scaled(double scale) const {
  if (!(scale > 0.0)) throw InvalidInput("prior: scale must be positive");
  return {theta_mean_, theta_cov_ * scale * scale, alpha_mean_, alpha_cov_ * scale * scale};
}

}  // namespace avishape
