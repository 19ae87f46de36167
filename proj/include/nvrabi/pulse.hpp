#pragma once

// Camera-gated pulse train: laser -> wait -> RF, repeated until the cycle
// reaches its fixed point. PL is integrated over the laser window of the last
// cycle, and the contrast compares it against the same train with RF off.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nvrabi/model.hpp"

namespace nvrabi::pulse {

struct PulseSequence {
  double laser_duration = 0.0;  // s
  double wait_duration = 0.0;   // s
  double rf_duration = 0.0;     // tau, s
  model::DriveParams laser;
  model::DriveParams wait;
  model::DriveParams rf;
  model::TransitionRates rates;

  // Laser phase has no RF, the wait phase is dark, the RF phase has no pump.
  void validate() const;
  // Same timing with Omega_R = 0 everywhere.
  PulseSequence reference() const;
  PulseSequence with_rf_duration(double tau) const;

  friend bool operator==(const PulseSequence&, const PulseSequence&) = default;
};

// Timing and drive of the standard sequence. Unless overridden, Gamma_2 is
// the optically induced Gamma_c(s) during the laser (s = W_p / W_p^sat) and
// 1/T2* in the dark phases.
struct SequenceSettings {
  double laser_duration = 1e-6;
  double wait_duration = 400e-9;
  double rf_duration = 0.0;
  double pump_rate = 1.9e6;
  double rabi_frequency = 1.5e7;
  std::optional<double> laser_decoherence;
  std::optional<double> wait_decoherence;
  std::optional<double> rf_decoherence;
  model::TransitionRates rates;
  model::PhysicalConstants constants;
};

PulseSequence build_sequence(const SequenceSettings& settings);

// Shorthand for build_sequence with default decoherence and constants.
PulseSequence standard_sequence(double laser_duration, double pump_rate, double rabi_frequency,
                                double rf_duration, const model::TransitionRates& rates = {});

enum class TraceMode { none, last_cycle, all_cycles };

struct CycleResult {
  model::SystemState final_state;
  // Trapezoidal integral of n4 + n5 + n6 over the laser phase, in s.
  double integrated_pl = 0.0;
  // State at the end of the wait phase, right before the RF pulse.
  model::SystemState pre_rf_state;
  model::Trace trace;
  std::size_t cycles = 1;
  double residual = 0.0;  // max-norm change of the final state in the last cycle
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::size_t cycles, double residual)
      : NumericalError(what), cycles_(cycles), residual_(residual) {}
  std::size_t cycles() const { return cycles_; }
  double residual() const { return residual_; }

 private:
  std::size_t cycles_;
  double residual_;
};

// One laser/wait/RF pass starting from `state`. Trace times are relative to the
// start of the cycle plus `time_offset`.
CycleResult run_cycle(const model::SystemState& state, const PulseSequence& seq, double dt,
                      bool record_trace = false, double time_offset = 0.0);

struct SteadyCycleOptions {
  double dt = 1e-9;
  double tol = 1e-8;
  std::size_t max_cycles = 1000;
  TraceMode trace = TraceMode::none;
};

// Repeats run_cycle from the thermal state until successive cycle-final states
// differ by less than tol in max-norm; returns the last cycle. Throws
// ConvergenceError after max_cycles.
CycleResult iterate_to_steady_cycle(const PulseSequence& seq, const SteadyCycleOptions& opts = {});

// ODMR contrast (PL_ref - PL_sig) / PL_ref for the sequence as given.
double contrast_at_tau(const PulseSequence& seq, const SteadyCycleOptions& opts = {});

struct RabiCurve {
  std::vector<double> tau;       // s, strictly increasing
  std::vector<double> contrast;
  PulseSequence sequence;        // template; rf_duration is ignored
  double dt = 0.0;
  double tol = 0.0;

  void validate() const;
};

struct SweepOptions {
  SteadyCycleOptions cycle;
  // 0 picks std::thread::hardware_concurrency().
  std::size_t threads = 1;
};

// One contrast per tau, each with its own RF-off reference. Results do not
// depend on the thread count.
RabiCurve simulate_rabi_sweep(const PulseSequence& seq_template, std::span<const double> taus,
                              const SweepOptions& opts = {});

// tau grid start, start + step, ... up to and including stop (within 1e-9 step).
std::vector<double> tau_grid(double start, double stop, double step);

}  // namespace nvrabi::pulse
