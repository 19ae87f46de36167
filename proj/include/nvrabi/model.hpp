#pragma once

// Seven-level NV centre model: rate equations for the optical cycle merged
// with resonant two-level Bloch dynamics between |0> (level 1) and |-1>
// (level 2). Everything is written in the rotating frame at exact resonance.
//
// Level numbering:
//   1, 2, 3  ground triplet   |0>, |-1>, |+1>
//   4, 5, 6  excited triplet  |0>, |-1>, |+1>
//   7        metastable singlet

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nvrabi/error.hpp"

namespace nvrabi::model {

struct PhysicalConstants {
  // Inverse excited-state lifetime (~13 ns), s^-1.
  double gamma_c_inf = 8.0e7;
  // Gyromagnetic ratio, Hz per mT.
  double gyromagnetic_hz_per_mt = 28.0e6;
  // Absorption cross section, m^2.
  double cross_section = 3.0e-21;
  // Pump wavelength, m.
  double wavelength = 532.0e-9;
  double planck_h = 6.62607015e-34;
  double light_c = 299792458.0;
  // Intrinsic spin dephasing rate 1/T2* (T2* = 2 us), s^-1.
  double gamma_2_dark = 5.0e5;
  // Pumping parameter at which the steady-state PL saturates, s^-1. Converts a
  // saturation parameter into a pump rate, W_p = s * W_p^sat.
  double pump_rate_saturation = 1.9e7;

  friend bool operator==(const PhysicalConstants&, const PhysicalConstants&) = default;
};

// Incoherent decay rates k_ij (level i -> level j), all in s^-1.
struct TransitionRates {
  double k41 = 66.0e6;
  double k52 = 66.0e6;
  double k63 = 66.0e6;
  double k47 = 8.0e6;
  double k57 = 50.0e6;
  double k67 = 50.0e6;
  double k71 = 2.5e6;
  double k72 = 0.37e6;
  double k73 = 0.37e6;

  // Throws InputError when any rate is negative or non-finite.
  void validate() const;

  double excited_decay(int level) const;  // level in {4, 5, 6}
  double metastable_decay() const { return k71 + k72 + k73; }
  bool all_zero() const;

  friend bool operator==(const TransitionRates&, const TransitionRates&) = default;
};

struct DriveParams {
  double pump_rate = 0.0;        // W_p, s^-1
  double rabi_frequency = 0.0;   // Omega_R, rad s^-1
  double decoherence_rate = 0.0; // Gamma_2, s^-1

  void validate() const;

  friend bool operator==(const DriveParams&, const DriveParams&) = default;
};

inline constexpr std::size_t kStateSize = 8;
inline constexpr std::size_t kLevels = 7;

// Populations n1..n7 followed by the coherence n_c = Im[rho_21 e^{i w0 t}].
struct SystemState {
  std::array<double, kStateSize> values{};

  static SystemState thermal();
  static SystemState in_level(int level);

  double population(int level) const { return values[static_cast<std::size_t>(level - 1)]; }
  double& population(int level) { return values[static_cast<std::size_t>(level - 1)]; }
  double coherence() const { return values[7]; }
  double& coherence() { return values[7]; }

  double population_sum() const;
  double ground_population() const { return values[0] + values[1] + values[2]; }
  // n1 / (n1 + n2 + n3)
  double ground_polarization() const;

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

using StateDerivative = std::array<double, kStateSize>;

// Largest absolute entry-wise difference over all eight state entries.
double max_abs_difference(const SystemState& a, const SystemState& b);

namespace detail {

// Right-hand side without argument checks; n7 is derived from the closure
// 1 = n1 + ... + n7 so the returned rates always sum to zero.
inline StateDerivative rate_derivative(const std::array<double, kStateSize>& s,
                                       const TransitionRates& k,
                                       const DriveParams& d) {
  const double n1 = s[0], n2 = s[1], n3 = s[2], n4 = s[3], n5 = s[4], n6 = s[5];
  const double n7 = 1.0 - (n1 + n2 + n3 + n4 + n5 + n6);
  const double nc = s[7];
  const double wp = d.pump_rate;
  const double om = d.rabi_frequency;

  StateDerivative out{};
  out[0] = -n1 * wp + n4 * k.k41 + n7 * k.k71 + om * nc;
  out[1] = -n2 * wp + n5 * k.k52 + n7 * k.k72 - om * nc;
  out[2] = -n3 * wp + n6 * k.k63 + n7 * k.k73;
  out[3] = n1 * wp - n4 * k.k41 - n4 * k.k47;
  out[4] = n2 * wp - n5 * k.k52 - n5 * k.k57;
  out[5] = n3 * wp - n6 * k.k63 - n6 * k.k67;
  out[6] = -(out[0] + out[1] + out[2] + out[3] + out[4] + out[5]);
  out[7] = -d.decoherence_rate * nc + 0.5 * om * (n2 - n1);
  return out;
}

}  // namespace detail

// d/dt of the state. Rejects negative rates and non-finite state entries.
StateDerivative derivative(const SystemState& state, const TransitionRates& rates,
                           const DriveParams& drive);

struct TracePoint {
  double time = 0.0;  // seconds since the start of the integration
  SystemState state;
};
using Trace = std::vector<TracePoint>;

struct IntegrationResult {
  SystemState final_state;
  Trace trace;
};

// Number of equal RK4 steps used to cover `duration` with steps no longer
// than `dt`. The actual step is duration / count so phases end exactly.
std::size_t step_count(double duration, double dt);

// Fixed-step RK4. `visit(step_index, time, state)` is called for the initial
// state (index 0) and after every step, and not at all when duration is 0. Throws NumericalError naming the step
// index if the state becomes non-finite. Arguments are assumed validated.
template <class Visitor>
SystemState integrate_visiting(const SystemState& initial, const TransitionRates& rates,
                               const DriveParams& drive, double duration, double dt,
                               Visitor&& visit);

// Advances `state` by `duration` seconds; the trace holds the initial state and
// every step (empty when duration is 0 or record_trace is false).
IntegrationResult integrate(const SystemState& state, const TransitionRates& rates,
                            const DriveParams& drive, double duration, double dt,
                            bool record_trace = true);

// Stationary solution of the rate equations for a drive with Omega_R = 0.
// With W_p > 0 the solution is unique. With W_p = 0 the ground triplet is
// absorbing; the result is `initial` after all excited and metastable
// population has relaxed into it.
SystemState steady_state(const TransitionRates& rates, const DriveParams& drive,
                         const SystemState& initial = SystemState::thermal());

// PL is proportional to n4 + n5 + n6.
inline double excited_population(const SystemState& state) {
  return state.values[3] + state.values[4] + state.values[5];
}

// Optically induced spin decoherence rate Gamma_c^inf * s / (s + 1).
double gamma_c(double saturation, const PhysicalConstants& constants = {});

// --- template implementation ---------------------------------------------

[[noreturn]] void throw_non_finite(std::size_t step, double time);

template <class Visitor>
SystemState integrate_visiting(const SystemState& initial, const TransitionRates& rates,
                               const DriveParams& drive, double duration, double dt,
                               Visitor&& visit) {
  using Vec = std::array<double, kStateSize>;
  Vec y = initial.values;
  if (duration == 0.0) return initial;
  visit(std::size_t{0}, 0.0, static_cast<const SystemState&>(initial));

  const std::size_t n = step_count(duration, dt);
  const double h = duration / static_cast<double>(n);

  auto axpy = [](const Vec& base, double a, const Vec& dir) {
    Vec r;
    for (std::size_t i = 0; i < kStateSize; ++i) r[i] = base[i] + a * dir[i];
    return r;
  };

  SystemState current;
  for (std::size_t step = 1; step <= n; ++step) {
    const Vec k1 = detail::rate_derivative(y, rates, drive);
    const Vec k2 = detail::rate_derivative(axpy(y, 0.5 * h, k1), rates, drive);
    const Vec k3 = detail::rate_derivative(axpy(y, 0.5 * h, k2), rates, drive);
    const Vec k4 = detail::rate_derivative(axpy(y, h, k3), rates, drive);
    for (std::size_t i = 0; i < kStateSize; ++i) {
      y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    y[6] = 1.0 - (y[0] + y[1] + y[2] + y[3] + y[4] + y[5]);
    for (double v : y) {
      if (!std::isfinite(v)) throw_non_finite(step, static_cast<double>(step) * h);
    }
    current.values = y;
    visit(step, static_cast<double>(step) * h, static_cast<const SystemState&>(current));
  }
  current.values = y;
  return current;
}

}  // namespace nvrabi::model
