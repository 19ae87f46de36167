#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "nvrabi/analysis.hpp"

namespace nvrabi::analysis {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_phase(double d) {
  double w = std::remainder(d, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

RabiParams from_vector(const Eigen::VectorXd& p) { return {p(0), p(1), p(2), p(3)}; }

Eigen::Vector4d to_vector(const RabiParams& p) {
  return {p.amplitude, p.decay_time, p.angular_frequency, p.phase};
}

double cost_of(const RabiParams& p, std::span<const double> tau, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double r = rabi_model(p, tau[i]) - c[i];
    s += r * r;
  }
  return s;
}

RabiFit failed(const std::string& why, const RabiParams& best = {}) {
  RabiFit f;
  f.params = best;
  f.status.message = why;
  return f;
}

}  // namespace

double rabi_model(const RabiParams& p, double tau) {
  return p.amplitude *
         (1.0 - std::exp(-tau / p.decay_time) * std::cos(p.angular_frequency * tau + p.phase));
}

RabiFit fit_rabi(std::span<const double> tau, std::span<const double> contrast,
                 const std::optional<RabiParams>& guess) {
  if (tau.size() != contrast.size()) return failed("tau and contrast lengths differ");
  if (tau.size() < 8) return failed("need at least 8 samples");
  for (std::size_t i = 0; i < tau.size(); ++i) {
    if (!std::isfinite(tau[i]) || !std::isfinite(contrast[i])) return failed("non-finite sample");
  }

  RabiParams start;
  if (guess) {
    start = *guess;
  } else {
    const double span = tau.back() - tau.front();
    double nu = 0.0;
    try {
      nu = fft_rabi_frequency(tau, contrast);
    } catch (const std::exception& e) {
      return failed(std::string("cannot initialise frequency: ") + e.what());
    }
    start.amplitude = std::accumulate(contrast.begin(), contrast.end(), 0.0) /
                      static_cast<double>(contrast.size());
    start.angular_frequency = 2.0 * kPi * nu;
    start.decay_time = span / 2.0;
    // The sweep may start at tau > 0, so the phase is not known up front;
    // take the best of a few trial values.
    double best = std::numeric_limits<double>::infinity();
    for (int k = -3; k <= 4; ++k) {
      RabiParams trial = start;
      trial.phase = k * kPi / 4.0;
      const double c = cost_of(trial, tau, contrast);
      if (c < best) {
        best = c;
        start.phase = trial.phase;
      }
    }
  }
  if (!(start.decay_time > 0.0)) return failed("initial decay time must be > 0", start);

  const std::size_t m = tau.size();
  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double a = p(0), b = p(1), c = p(2), d = p(3);
    if (!(b > 0.0)) return false;
    r.resize(static_cast<Eigen::Index>(m));
    jac.resize(static_cast<Eigen::Index>(m), 4);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double t = tau[i];
      const double env = std::exp(-t / b);
      const double cs = std::cos(c * t + d);
      const double sn = std::sin(c * t + d);
      r(row) = a * (1.0 - env * cs) - contrast[i];
      jac(row, 0) = 1.0 - env * cs;
      jac(row, 1) = -a * cs * env * t / (b * b);
      jac(row, 2) = a * env * sn * t;
      jac(row, 3) = a * env * sn;
    }
    return true;
  };

  const Eigen::Vector4d scale{std::abs(start.amplitude) + 1e-300, start.decay_time,
                              std::abs(start.angular_frequency) + 1.0, 1.0};
  const auto ls = fit::levenberg_marquardt(residual, to_vector(start), scale);

  RabiFit out;
  out.params = from_vector(ls.params);
  out.residual_rms = ls.residual_rms;
  out.covariance = ls.covariance;
  out.status = ls.status;
  // cos(c t + d) = cos(-c t - d): report the non-negative frequency.
  if (out.params.angular_frequency < 0.0) {
    out.params.angular_frequency = -out.params.angular_frequency;
    out.params.phase = -out.params.phase;
    out.covariance.row(2) *= -1.0;
    out.covariance.col(2) *= -1.0;
    out.covariance.row(3) *= -1.0;
    out.covariance.col(3) *= -1.0;
  }
  out.params.phase = wrap_phase(out.params.phase);
  if (out.status.ok() && out.params.amplitude < 0.0) {
    out.status.converged = false;
    out.status.message = "fitted amplitude is negative";
  }
  return out;
}

RabiFit fit_rabi(const pulse::RabiCurve& curve, const std::optional<RabiParams>& guess) {
  return fit_rabi(std::span<const double>(curve.tau), std::span<const double>(curve.contrast), guess);
}

}  // namespace nvrabi::analysis
