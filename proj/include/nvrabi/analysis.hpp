#pragma once

// Curve fitting and transforms for Rabi sweeps, saturation scans and RF field
// maps.

#include <Eigen/Dense>
#include <limits>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nvrabi/least_squares.hpp"
#include "nvrabi/model.hpp"
#include "nvrabi/pulse.hpp"

namespace nvrabi::analysis {

// ---------------------------------------------------------------------------
// Damped-cosine Rabi fit: f(tau) = a (1 - exp(-tau / b) cos(c tau + d))

struct RabiParams {
  double amplitude = 0.0;        // a_R
  double decay_time = 0.0;       // b_R, s
  double angular_frequency = 0.0;// c_R, rad/s
  double phase = 0.0;            // d_R, rad, wrapped to (-pi, pi]
};

double rabi_model(const RabiParams& p, double tau);

struct RabiFit {
  RabiParams params;
  double residual_rms = 0.0;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Constant(std::numeric_limits<double>::infinity());
  fit::FitStatus status;

  bool valid() const { return status.ok(); }
};

// Without a guess, the amplitude starts at mean(C), the frequency at the FFT
// peak, the decay at half the sweep span, and the phase at the best of a few
// trial values. Never throws for bad data: failures come back with
// valid() == false and a message. Requires >= 8 samples.
RabiFit fit_rabi(std::span<const double> tau, std::span<const double> contrast,
                 const std::optional<RabiParams>& guess = std::nullopt);
RabiFit fit_rabi(const pulse::RabiCurve& curve, const std::optional<RabiParams>& guess = std::nullopt);

// Second-harmonic asymmetry proxy: RMS of the fit residual restricted to the
// spectral band [1.5, 2.5] x c_R / 2pi, divided by a_R. Needs uniform tau.
double second_harmonic_residual(std::span<const double> tau, std::span<const double> contrast,
                                const RabiParams& fit);

// ---------------------------------------------------------------------------
// Spectral frequency estimate

// Frequency (Hz) of the largest non-DC peak of the mean-removed, Hann-tapered
// spectrum, refined by a parabola through the log magnitudes of the peak bin
// and its neighbours. Throws
// InputError for < 16 samples or non-uniform spacing (1e-3 relative), and
// NumericalError("no spectral peak") for a flat signal.
double fft_rabi_frequency(std::span<const double> tau, std::span<const double> values);

// Bin width 1 / (N dtau) of the spectrum used by fft_rabi_frequency, Hz.
double fft_bin_width(std::span<const double> tau);

// B_R = sqrt(2) nu_R / gamma, in mT.
double b_field_from_rabi(double nu_hz, const model::PhysicalConstants& constants = {});

// ---------------------------------------------------------------------------
// RF field mapping

// Contrast samples indexed (x, y, tau) with x outermost and tau innermost.
struct ContrastStack {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double um_per_pixel = 1.0;
  std::vector<double> tau;   // s, ascending, size ntau
  std::vector<float> contrast;

  std::size_t ntau() const { return tau.size(); }
  std::size_t index(std::size_t x, std::size_t y, std::size_t t) const { return (x * ny + y) * tau.size() + t; }
  float at(std::size_t x, std::size_t y, std::size_t t) const { return contrast[index(x, y, t)]; }
  float& at(std::size_t x, std::size_t y, std::size_t t) { return contrast[index(x, y, t)]; }
  void validate() const;
};

struct FieldProfile {
  std::vector<double> x_um;
  std::vector<double> nu_hz;  // NaN where the point is missing
  std::vector<double> b_mt;   // NaN where the point is missing
};

// For every x, averages the window of `y_window` rows centred on y_center
// (rows y_center - y_window/2 ... ), skipping NaN samples, and converts the
// FFT frequency into a field. A column whose window is more than half NaN, or
// whose spectrum has no peak, becomes a missing point.
FieldProfile map_field_profile(const ContrastStack& stack, std::size_t y_center,
                               std::size_t y_window = 10, std::size_t threads = 1,
                               const model::PhysicalConstants& constants = {});

// Synthetic stack with contrast a (1 - exp(-tau/decay) cos(2 pi nu tau)),
// nu = gamma B / sqrt(2), B either uniform or a_W / (x + b_W - c_W). Noise is
// additive Gaussian from mt19937_64(seed), drawn in storage order.
struct SyntheticStackParams {
  std::size_t nx = 64, ny = 20, ntau = 128;
  double um_per_pixel = 1.0;
  double tau_start = 0.0, tau_step = 20e-9;
  double amplitude = 0.02, decay = 2e-6;
  std::optional<double> uniform_mt;
  double a_w = 10.0, b_w = 57.0, c_w = 0.0;
  double noise = 0.0;
  std::uint64_t seed = 1;
};

ContrastStack synthetic_stack(const SyntheticStackParams& params, const model::PhysicalConstants& constants = {});

// f(x) = a_W / (x + b_W - c_W), with c_W fixed. Lengths in um, field in mT.
struct WireFit {
  double a_w = 0.0;   // mT um
  double b_w = 0.0;   // um
  double c_w = 0.0;   // um
  double residual_rms = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Constant(std::numeric_limits<double>::infinity());
  fit::FitStatus status;

  bool valid() const { return status.ok(); }
};

// Fits B_R(x) over the valid profile points with x in [x_min, x_max]. Needs at
// least 5 points.
WireFit fit_wire_decay(const FieldProfile& profile, double c_w_um,
                       std::optional<double> x_min_um = std::nullopt,
                       std::optional<double> x_max_um = std::nullopt);

// ---------------------------------------------------------------------------
// Saturation

struct SaturationPoint {
  double pump_rate = 0.0;           // W_p, s^-1
  double excited_population = 0.0;  // n_E at steady state
};

std::vector<SaturationPoint> saturation_scan(const model::TransitionRates& rates,
                                             std::span<const double> pump_rates);

// n_E = a_p W_p / (W_p + W_p^sat)
struct SaturationFit {
  double a_p = 0.0;
  double pump_rate_sat = 0.0;  // s^-1
  double residual_rms = 0.0;
  Eigen::Matrix2d covariance = Eigen::Matrix2d::Constant(std::numeric_limits<double>::infinity());
  fit::FitStatus status;

  bool valid() const { return status.ok(); }
};

// Flagged ill-conditioned when the normalized Jacobian condition number
// exceeds kSaturationMaxCondition (a scan that never approaches saturation).
inline constexpr double kSaturationMaxCondition = 100.0;
SaturationFit fit_saturation(std::span<const SaturationPoint> scan);

// `count` log-spaced pump rates covering [lo, hi].
std::vector<double> log_space(double lo, double hi, std::size_t count);

// I_sat = W_p^sat c h / (sigma lambda), W m^-2.
double saturation_intensity(double pump_rate_sat, const model::PhysicalConstants& constants = {});
// P_sat = (pi w0^2 / 2) I_sat, W; w0 in m.
double saturation_power(double intensity_sat, double beam_waist);
// s = P / P_sat.
double saturation_parameter(double power, double power_sat);

// ---------------------------------------------------------------------------
// Optical timescales

struct TimescaleOptions {
  double dt = 1e-9;
  double horizon = 100e-6;
  model::PhysicalConstants constants;
};

// Starting from the pumped steady state at saturation parameter s, switches
// the laser off and returns the time for n7 to fall to 1/e of its value at
// switch-off.
double depletion_time(const model::TransitionRates& rates, double saturation = 0.1,
                      const TimescaleOptions& opts = {});

// Starting from the thermal state under continuous pumping at saturation s,
// the first time n1 / (n1 + n2 + n3) exceeds threshold x its steady value.
double polarization_time(const model::TransitionRates& rates, double saturation,
                         double threshold = 0.99, const TimescaleOptions& opts = {});

}  // namespace nvrabi::analysis
