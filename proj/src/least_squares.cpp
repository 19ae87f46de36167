#include "nvrabi/least_squares.hpp"

#include <cmath>
#include <limits>

namespace nvrabi::fit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double relative_change(const Eigen::VectorXd& step, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& scale) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double ref = std::max(std::abs(p(i)), scale(i));
    worst = std::max(worst, std::abs(step(i)) / ref);
  }
  return worst;
}

double condition_of(const Eigen::MatrixXd& jac) {
  Eigen::MatrixXd normalized = jac;
  for (Eigen::Index c = 0; c < jac.cols(); ++c) {
    const double norm = jac.col(c).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) return kInf;
    normalized.col(c) /= norm;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(normalized);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : kInf;
}

}  // namespace

LeastSquaresResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd initial,
                                       const Eigen::VectorXd& scale,
                                       const LeastSquaresOptions& opts) {
  LeastSquaresResult out;
  const Eigen::Index n = initial.size();
  Eigen::VectorXd p = std::move(initial);
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  out.params = p;
  out.covariance = Eigen::MatrixXd::Constant(n, n, kInf);

  if (!residual(p, r, jac) || !r.allFinite() || !jac.allFinite()) {
    out.status.message = "initial guess is outside the model domain";
    return out;
  }
  const Eigen::Index m = r.size();
  if (m < n) {
    out.status.message = "fewer data points than parameters";
    return out;
  }

  double cost = 0.5 * r.squaredNorm();
  double lambda = 1e-3;
  int accepted = 0;
  int evaluations = 0;
  const int max_evaluations = 20 * opts.max_iterations;
  bool stalled = false;
  Eigen::VectorXd r_new;
  Eigen::MatrixXd jac_new;

  while (accepted < opts.max_iterations && evaluations < max_evaluations) {
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd gradient = jac.transpose() * r;
    Eigen::VectorXd diag = normal.diagonal();
    const double floor = std::max(diag.maxCoeff() * 1e-15, std::numeric_limits<double>::min());
    diag = diag.cwiseMax(floor);

    Eigen::MatrixXd damped = normal;
    damped.diagonal() += lambda * diag;
    const Eigen::VectorXd step = damped.ldlt().solve(-gradient);
    ++evaluations;

    const double change = relative_change(step, p, scale);
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e30) {
        stalled = true;
        break;
      }
      continue;
    }

    const Eigen::VectorXd trial = p + step;
    const bool in_domain = residual(trial, r_new, jac_new) && r_new.allFinite() && jac_new.allFinite();
    const double trial_cost = in_domain ? 0.5 * r_new.squaredNorm() : kInf;

    if (trial_cost <= cost) {
      p = trial;
      r.swap(r_new);
      jac.swap(jac_new);
      cost = trial_cost;
      lambda = std::max(lambda / 3.0, 1e-12);
      ++accepted;
      if (change < opts.relative_step_tol) {
        out.status.converged = true;
        break;
      }
    } else {
      // A near-Gauss-Newton correction that is already negligible means we
      // sit at the minimum up to roundoff.
      if (change < opts.relative_step_tol && lambda < 1e4) {
        out.status.converged = true;
        break;
      }
      lambda *= 4.0;
      if (lambda > 1e30) {
        stalled = true;
        break;
      }
    }
  }

  out.params = p;
  out.status.iterations = accepted;
  out.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(m));
  out.status.condition_number = condition_of(jac);
  out.status.ill_conditioned = !(out.status.condition_number <= opts.max_condition);

  // Invert on normalized columns: parameter scales differ by many decades,
  // which would defeat the LU rank test on the raw normal matrix.
  const Eigen::VectorXd norms = jac.colwise().norm().transpose();
  if (m > n && (norms.array() > 0.0).all()) {
    const Eigen::VectorXd inv = norms.cwiseInverse();
    const Eigen::MatrixXd jn = jac * inv.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jn.transpose() * jn);
    if (lu.isInvertible()) {
      const double sigma2 = 2.0 * cost / static_cast<double>(m - n);
      out.covariance = sigma2 * (inv.asDiagonal() * lu.inverse() * inv.asDiagonal());
    }
  }

  if (stalled) {
    out.status.message = "stalled: no downhill step found";
  } else if (!out.status.converged) {
    out.status.message = "did not converge within " + std::to_string(opts.max_iterations) + " iterations";
  } else if (out.status.ill_conditioned) {
    out.status.message = "parameters not identifiable (condition number " +
                         std::to_string(out.status.condition_number) + ")";
  }
  return out;
}

}  // namespace nvrabi::fit
