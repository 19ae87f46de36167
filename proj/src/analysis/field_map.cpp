#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nvrabi/analysis.hpp"
#include "nvrabi/parallel.hpp"

namespace nvrabi::analysis {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void ContrastStack::validate() const {
  if (nx == 0 || ny == 0 || tau.empty()) throw InputError("contrast stack: dimensions must be positive");
  if (!(um_per_pixel > 0.0) || !std::isfinite(um_per_pixel)) {
    throw InputError("contrast stack: um_per_pixel must be > 0");
  }
  if (contrast.size() != nx * ny * tau.size()) throw InputError("contrast stack: data size mismatch");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (!(tau[i] > tau[i - 1])) throw InputError("contrast stack: tau must be ascending");
  }
}

FieldProfile map_field_profile(const ContrastStack& stack, std::size_t y_center,
                               std::size_t y_window, std::size_t threads,
                               const model::PhysicalConstants& constants) {
  stack.validate();
  if (y_window == 0) throw InputError("map_field_profile: window must be >= 1 row");
  const std::size_t half = y_window / 2;
  if (y_center < half || y_center - half + y_window > stack.ny) {
    throw InputError("map_field_profile: y window [" + std::to_string(static_cast<long long>(y_center) -
                                                                      static_cast<long long>(half)) +
                     ", " + std::to_string(y_center - half + y_window) + ") is outside the stack (ny = " +
                     std::to_string(stack.ny) + ")");
  }
  const std::size_t y0 = y_center - half;
  const std::size_t nt = stack.ntau();

  FieldProfile profile;
  profile.x_um.resize(stack.nx);
  profile.nu_hz.assign(stack.nx, kNaN);
  profile.b_mt.assign(stack.nx, kNaN);

  parallel_for(stack.nx, threads, [&](std::size_t x) {
    profile.x_um[x] = static_cast<double>(x) * stack.um_per_pixel;
    std::vector<double> mean(nt, 0.0);
    std::size_t missing = 0;
    for (std::size_t t = 0; t < nt; ++t) {
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t y = y0; y < y0 + y_window; ++y) {
        const float v = stack.at(x, y, t);
        if (std::isnan(v)) {
          ++missing;
          continue;
        }
        sum += v;
        ++count;
      }
      mean[t] = count > 0 ? sum / static_cast<double>(count) : kNaN;
    }
    if (2 * missing > y_window * nt) return;
    for (double v : mean) {
      if (std::isnan(v)) return;
    }
    try {
      const double nu = fft_rabi_frequency(stack.tau, mean);
      profile.nu_hz[x] = nu;
      profile.b_mt[x] = b_field_from_rabi(nu, constants);
    } catch (const std::exception&) {
      // recorded as a missing point
    }
  });
  return profile;
}

WireFit fit_wire_decay(const FieldProfile& profile, double c_w_um, std::optional<double> x_min_um,
                       std::optional<double> x_max_um) {
  WireFit out;
  out.c_w = c_w_um;
  if (profile.x_um.size() != profile.b_mt.size()) {
    out.status.message = "profile columns have different lengths";
    return out;
  }
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < profile.x_um.size(); ++i) {
    const double x = profile.x_um[i];
    const double y = profile.b_mt[i];
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    if (x_min_um && x < *x_min_um) continue;
    if (x_max_um && x > *x_max_um) continue;
    xs.push_back(x);
    ys.push_back(y);
  }
  const std::size_t m = xs.size();
  if (m < 5) {
    out.status.message = "need at least 5 valid profile points, have " + std::to_string(m);
    return out;
  }

  // 1/f = x / a + (b - c) / a is linear in x: least-squares line as the start.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(ys[i] > 0.0)) {
      out.status.message = "field values must be positive";
      return out;
    }
    const double inv = 1.0 / ys[i];
    sx += xs[i];
    sy += inv;
    sxx += xs[i] * xs[i];
    sxy += xs[i] * inv;
  }
  const double dm = static_cast<double>(m);
  const double det = dm * sxx - sx * sx;
  const double slope = det != 0.0 ? (dm * sxy - sx * sy) / det : 0.0;
  const double intercept = (sy - slope * sx) / dm;
  const double x_span = xs.back() - xs.front();
  // A field that does not fall off with x within the noise has no finite
  // offset radius.
  if (!(slope > 0.0) || !std::isfinite(slope) || intercept / slope > 1e6 * std::max(x_span, 1.0)) {
    out.status.message = "profile does not decay with distance; offset radius diverges";
    out.a_w = slope > 0.0 ? 1.0 / slope : std::numeric_limits<double>::infinity();
    out.b_w = std::numeric_limits<double>::infinity();
    return out;
  }
  const double x_lo = *std::min_element(xs.begin(), xs.end());
  Eigen::Vector2d start{1.0 / slope, intercept / slope + c_w_um};
  if (x_lo + start(1) - c_w_um <= 0.0) start(1) = c_w_um - x_lo + 0.1 * std::max(x_span, 1.0);

  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double a = p(0), b = p(1);
    if (x_lo + b - c_w_um <= 0.0) return false;
    r.resize(static_cast<Eigen::Index>(m));
    jac.resize(static_cast<Eigen::Index>(m), 2);
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double den = xs[i] + b - c_w_um;
      r(row) = a / den - ys[i];
      jac(row, 0) = 1.0 / den;
      jac(row, 1) = -a / (den * den);
    }
    return true;
  };
  const Eigen::Vector2d scale{std::abs(start(0)), std::max(std::abs(start(1)), std::max(x_span, 1.0))};
  const auto ls = fit::levenberg_marquardt(residual, start, scale);

  out.a_w = ls.params(0);
  out.b_w = ls.params(1);
  out.residual_rms = ls.residual_rms;
  out.covariance = ls.covariance;
  out.status = ls.status;
  return out;
}

ContrastStack synthetic_stack(const SyntheticStackParams& s, const model::PhysicalConstants& constants) {
  if (!(s.decay > 0.0)) throw InputError("synthetic stack: decay must be > 0");
  ContrastStack stack;
  stack.nx = s.nx;
  stack.ny = s.ny;
  stack.um_per_pixel = s.um_per_pixel;
  stack.tau.resize(s.ntau);
  for (std::size_t t = 0; t < s.ntau; ++t) stack.tau[t] = s.tau_start + static_cast<double>(t) * s.tau_step;
  stack.contrast.resize(s.nx * s.ny * s.ntau);
  stack.validate();

  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> noise(0.0, s.noise > 0.0 ? s.noise : 1.0);
  for (std::size_t x = 0; x < s.nx; ++x) {
    const double x_um = static_cast<double>(x) * s.um_per_pixel;
    const double den = x_um + s.b_w - s.c_w;
    if (!s.uniform_mt && !(den > 0.0)) throw InputError("synthetic stack: x + b_W - c_W must stay > 0");
    const double b_mt = s.uniform_mt ? *s.uniform_mt : s.a_w / den;
    const double nu = b_mt * constants.gyromagnetic_hz_per_mt / std::numbers::sqrt2;
    for (std::size_t y = 0; y < s.ny; ++y) {
      for (std::size_t t = 0; t < s.ntau; ++t) {
        const double tau = stack.tau[t];
        double c = s.amplitude * (1.0 - std::exp(-tau / s.decay) * std::cos(2.0 * std::numbers::pi * nu * tau));
        if (s.noise > 0.0) c += noise(rng);
        stack.at(x, y, t) = static_cast<float>(c);
      }
    }
  }
  return stack;
}

}  // namespace nvrabi::analysis
