#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace nvrabi::fit {

// residual(p, r, J) fills r (model - data) and its Jacobian J = dr/dp. It
// returns false if p is outside the model's domain; the step is then rejected.
using ResidualFn = std::function<bool(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J)>;

struct LeastSquaresOptions {
  int max_iterations = 200;
  double relative_step_tol = 1e-10;
  // Column-normalized Jacobian condition number above which parameters are
  // reported as not identifiable from the data.
  double max_condition = 1e8;
};

struct FitStatus {
  bool converged = false;
  bool ill_conditioned = false;
  int iterations = 0;
  double condition_number = 0.0;
  std::string message;

  bool ok() const { return converged && !ill_conditioned; }
};

struct LeastSquaresResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double residual_rms = 0.0;
  FitStatus status;
};

// Levenberg-Marquardt with Marquardt diagonal scaling. Stops when an accepted
// step changes every parameter by less than relative_step_tol relative to
// max(|p_i|, scale_i), or after max_iterations (not converged). Deterministic.
LeastSquaresResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd initial,
                                       const Eigen::VectorXd& scale,
                                       const LeastSquaresOptions& opts = {});

}  // namespace nvrabi::fit
