#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>

#include "nvrabi/analysis.hpp"

namespace nvrabi::analysis {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<std::complex<double>> real_spectrum(std::vector<double> samples) {
  const int n = static_cast<int>(samples.size());
  std::vector<std::complex<double>> out(samples.size() / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, samples.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

double uniform_step(std::span<const double> tau) {
  if (tau.size() < 2) throw InputError("spectrum: need at least two samples");
  const double step = (tau.back() - tau.front()) / static_cast<double>(tau.size() - 1);
  if (!(step > 0.0)) throw InputError("spectrum: tau must be increasing");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (std::abs((tau[i] - tau[i - 1]) - step) > 1e-3 * step) {
      throw InputError("spectrum: tau spacing is not uniform at index " + std::to_string(i));
    }
  }
  return step;
}

}  // namespace

double fft_bin_width(std::span<const double> tau) {
  return 1.0 / (static_cast<double>(tau.size()) * uniform_step(tau));
}

double fft_rabi_frequency(std::span<const double> tau, std::span<const double> values) {
  if (tau.size() != values.size()) throw InputError("fft_rabi_frequency: length mismatch");
  if (tau.size() < 16) throw InputError("fft_rabi_frequency: need at least 16 samples");
  const double step = uniform_step(tau);
  const std::size_t n = values.size();

  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  std::vector<double> centred(n);
  double spread = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i])) throw InputError("fft_rabi_frequency: non-finite sample");
    centred[i] = values[i] - mean;
    spread = std::max(spread, std::abs(centred[i]));
    scale = std::max(scale, std::abs(values[i]));
  }
  if (spread <= 1e-12 * scale || spread == 0.0) throw NumericalError("no spectral peak");

  // Hann taper against leakage from the truncated, decaying signal.
  for (std::size_t i = 0; i < n; ++i) {
    centred[i] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  const auto spectrum = real_spectrum(std::move(centred));
  std::vector<double> magnitude(spectrum.size());
  for (std::size_t k = 0; k < spectrum.size(); ++k) magnitude[k] = std::abs(spectrum[k]);

  const auto peak_it = std::max_element(magnitude.begin() + 1, magnitude.end());
  const auto k = static_cast<std::size_t>(peak_it - magnitude.begin());
  if (!(*peak_it > 0.0)) throw NumericalError("no spectral peak");

  double offset = 0.0;
  if (k >= 1 && k + 1 < magnitude.size()) {
    // parabola through the log magnitudes: exact for a Gaussian peak shape
    const double left = std::log(std::max(magnitude[k - 1], 1e-300));
    const double centre = std::log(magnitude[k]);
    const double right = std::log(std::max(magnitude[k + 1], 1e-300));
    const double denom = left - 2.0 * centre + right;
    if (denom != 0.0) offset = 0.5 * (left - right) / denom;
  }
  return (static_cast<double>(k) + offset) / (static_cast<double>(n) * step);
}

double second_harmonic_residual(std::span<const double> tau, std::span<const double> contrast,
                                const RabiParams& fit) {
  if (tau.size() != contrast.size()) throw InputError("second_harmonic_residual: length mismatch");
  const double step = uniform_step(tau);
  const std::size_t n = tau.size();
  if (!(fit.amplitude > 0.0)) throw InputError("second_harmonic_residual: fit amplitude must be > 0");

  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = contrast[i] - rabi_model(fit, tau[i]);
  const double mean = std::accumulate(residual.begin(), residual.end(), 0.0) / static_cast<double>(n);
  for (double& r : residual) r -= mean;

  const auto spectrum = real_spectrum(std::move(residual));
  const double nu = fit.angular_frequency / (2.0 * std::numbers::pi);
  const double bin = 1.0 / (static_cast<double>(n) * step);

  // Parseval: mean square of the band-limited signal. Interior bins of a real
  // spectrum stand for two conjugate bins.
  double power = 0.0;
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * bin;
    if (f < 1.5 * nu || f > 2.5 * nu) continue;
    const bool nyquist = (n % 2 == 0) && k == n / 2;
    power += (nyquist ? 1.0 : 2.0) * std::norm(spectrum[k]);
  }
  const double mean_square = power / (static_cast<double>(n) * static_cast<double>(n));
  return std::sqrt(mean_square) / fit.amplitude;
}

double b_field_from_rabi(double nu_hz, const model::PhysicalConstants& constants) {
  if (!(nu_hz >= 0.0)) throw InputError("b_field_from_rabi: frequency must be >= 0");
  return std::numbers::sqrt2 * nu_hz / constants.gyromagnetic_hz_per_mt;
}

}  // namespace nvrabi::analysis
