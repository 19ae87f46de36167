#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nvrabi/analysis.hpp"

namespace nvrabi::analysis {

std::vector<SaturationPoint> saturation_scan(const model::TransitionRates& rates,
                                             std::span<const double> pump_rates) {
  if (pump_rates.empty()) throw InputError("saturation_scan: pump rate list is empty");
  std::vector<SaturationPoint> out;
  out.reserve(pump_rates.size());
  for (double wp : pump_rates) {
    if (!(wp >= 0.0) || !std::isfinite(wp)) throw InputError("saturation_scan: pump rates must be >= 0");
    const auto state = model::steady_state(rates, {wp, 0.0, 0.0});
    out.push_back({wp, model::excited_population(state)});
  }
  return out;
}

SaturationFit fit_saturation(std::span<const SaturationPoint> scan) {
  SaturationFit out;
  std::vector<double> w, n;
  for (const auto& pt : scan) {
    if (!std::isfinite(pt.pump_rate) || !std::isfinite(pt.excited_population)) continue;
    w.push_back(pt.pump_rate);
    n.push_back(pt.excited_population);
  }
  const std::size_t m = w.size();
  if (m < 3) {
    out.status.message = "need at least 3 scan points";
    return out;
  }

  // Lineweaver-Burk line 1/n = 1/a + (W_sat/a)(1/W) for the starting point.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(w[i] > 0.0) || !(n[i] > 0.0)) continue;
    const double x = 1.0 / w[i], y = 1.0 / n[i];
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++used;
  }
  Eigen::Vector2d start{0.0, 0.0};
  if (used >= 2) {
    const double dn = static_cast<double>(used);
    const double det = dn * sxx - sx * sx;
    const double slope = det != 0.0 ? (dn * sxy - sx * sy) / det : 0.0;
    const double intercept = (sy - slope * sx) / dn;
    if (intercept > 0.0 && slope > 0.0) start = {1.0 / intercept, slope / intercept};
  }
  if (!(start(0) > 0.0)) {
    const double n_max = *std::max_element(n.begin(), n.end());
    const double w_max = *std::max_element(w.begin(), w.end());
    start = {2.0 * n_max, w_max};
  }

  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double a = p(0), s = p(1);
    if (!(s > 0.0)) return false;
    r.resize(static_cast<Eigen::Index>(m));
    jac.resize(static_cast<Eigen::Index>(m), 2);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double den = w[i] + s;
      r(row) = a * w[i] / den - n[i];
      jac(row, 0) = w[i] / den;
      jac(row, 1) = -a * w[i] / (den * den);
    }
    return true;
  };
  const Eigen::Vector2d scale{std::abs(start(0)), std::abs(start(1))};
  // a_p and W_p^sat separate only once the scan reaches the knee; below it the
  // data fix just their ratio. A scan confined to W_p << W_p^sat shows up as
  // a normalized condition number of order W_p^sat / W_p,max.
  fit::LeastSquaresOptions opts;
  opts.max_condition = kSaturationMaxCondition;
  const auto ls = fit::levenberg_marquardt(residual, start, scale, opts);
  out.a_p = ls.params(0);
  out.pump_rate_sat = ls.params(1);
  out.residual_rms = ls.residual_rms;
  out.covariance = ls.covariance;
  out.status = ls.status;
  return out;
}

std::vector<double> log_space(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || count < 2) throw InputError("log_space: need 0 < lo < hi and count >= 2");
  std::vector<double> out(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

double saturation_intensity(double pump_rate_sat, const model::PhysicalConstants& c) {
  if (!(pump_rate_sat > 0.0)) throw InputError("saturation_intensity: W_p^sat must be > 0");
  return pump_rate_sat * c.light_c * c.planck_h / (c.cross_section * c.wavelength);
}

double saturation_power(double intensity_sat, double beam_waist) {
  if (!(intensity_sat > 0.0) || !(beam_waist > 0.0)) {
    throw InputError("saturation_power: inputs must be > 0");
  }
  return std::numbers::pi * beam_waist * beam_waist / 2.0 * intensity_sat;
}

double saturation_parameter(double power, double power_sat) {
  if (!(power >= 0.0) || !(power_sat > 0.0)) throw InputError("saturation_parameter: bad power");
  return power / power_sat;
}

namespace {

// Linear interpolation of the time at which a sampled quantity crosses `level`.
double crossing_time(double t0, double v0, double t1, double v1, double level) {
  if (v1 == v0) return t1;
  return t0 + (level - v0) / (v1 - v0) * (t1 - t0);
}

}  // namespace

double depletion_time(const model::TransitionRates& rates, double saturation,
                      const TimescaleOptions& opts) {
  if (!(saturation > 0.0)) throw InputError("depletion_time: saturation parameter must be > 0");
  const double wp = saturation * opts.constants.pump_rate_saturation;
  const auto pumped = model::steady_state(rates, {wp, 0.0, 0.0});
  const double start = pumped.population(7);
  if (!(start > 0.0)) throw NumericalError("depletion_time: metastable level is empty under pumping");
  const double level = start / std::numbers::e;

  double found = std::numeric_limits<double>::quiet_NaN();
  double prev_t = 0.0, prev_v = start;
  model::integrate_visiting(pumped, rates, {0.0, 0.0, 0.0}, opts.horizon, opts.dt,
                            [&](std::size_t index, double t, const model::SystemState& s) {
                              const double v = s.population(7);
                              if (index > 0 && std::isnan(found) && v <= level) {
                                found = crossing_time(prev_t, prev_v, t, v, level);
                              }
                              prev_t = t;
                              prev_v = v;
                            });
  if (std::isnan(found)) throw NumericalError("depletion_time: 1/e level not reached within the horizon");
  return found;
}

double polarization_time(const model::TransitionRates& rates, double saturation, double threshold,
                         const TimescaleOptions& opts) {
  if (!(saturation > 0.0)) throw InputError("polarization_time: saturation parameter must be > 0");
  if (!(threshold > 0.0) || threshold > 1.0) throw InputError("polarization_time: threshold must be in (0, 1]");
  const double wp = saturation * opts.constants.pump_rate_saturation;
  const model::DriveParams drive{wp, 0.0, model::gamma_c(saturation, opts.constants)};
  const double asymptote = model::steady_state(rates, {wp, 0.0, 0.0}).ground_polarization();
  const double level = threshold * asymptote;

  const auto initial = model::SystemState::thermal();
  double found = initial.ground_polarization() >= level ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  double prev_t = 0.0, prev_v = initial.ground_polarization();
  model::integrate_visiting(initial, rates, drive, opts.horizon, opts.dt,
                            [&](std::size_t index, double t, const model::SystemState& s) {
                              const double v = s.ground_polarization();
                              if (index > 0 && std::isnan(found) && v >= level) {
                                found = crossing_time(prev_t, prev_v, t, v, level);
                              }
                              prev_t = t;
                              prev_v = v;
                            });
  if (std::isnan(found)) {
    throw NumericalError("polarization_time: threshold not reached within the horizon");
  }
  return found;
}

}  // namespace nvrabi::analysis
