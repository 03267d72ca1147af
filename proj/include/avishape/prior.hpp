#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace avishape {

/// Gaussian pose prior over joint rotations (3J) and bone scales (J).
/// Covariances are validated symmetric positive definite on construction.
class PosePrior {
 public:
  PosePrior() = default;
  PosePrior(Eigen::VectorXd theta_mean, Eigen::MatrixXd theta_cov, Eigen::VectorXd alpha_mean,
            Eigen::MatrixXd alpha_cov);

  const Eigen::VectorXd& theta_mean() const { return theta_mean_; }
  const Eigen::MatrixXd& theta_cov() const { return theta_cov_; }
  const Eigen::VectorXd& alpha_mean() const { return alpha_mean_; }
  const Eigen::MatrixXd& alpha_cov() const { return alpha_cov_; }

  /// Lower Cholesky factors, used for sampling.
  const Eigen::LLT<Eigen::MatrixXd>& theta_llt() const { return theta_llt_; }
  const Eigen::LLT<Eigen::MatrixXd>& alpha_llt() const { return alpha_llt_; }

  int num_joints() const { return static_cast<int>(alpha_mean_.size()); }

  /// Same means, covariances multiplied by scale^2.
  PosePrior scaled(double scale) const;

 private:
  Eigen::VectorXd theta_mean_, alpha_mean_;
  Eigen::MatrixXd theta_cov_, alpha_cov_;
  Eigen::LLT<Eigen::MatrixXd> theta_llt_, alpha_llt_;
};

}  // namespace avishape
