#include "nvrabi/pulse.hpp"

#include <cmath>
#include <string>

#include "nvrabi/parallel.hpp"

namespace nvrabi::pulse {

using model::DriveParams;
using model::SystemState;

namespace {

void require_duration(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0) {
    throw InputError(std::string("pulse sequence: ") + name + " must be finite and >= 0");
  }
}

// Roundoff can push empty levels slightly below zero; only clamp at phase
// boundaries so integrator errors are not hidden mid-phase.
SystemState clean_boundary(SystemState s) {
  bool touched = false;
  for (std::size_t i = 0; i < model::kLevels; ++i) {
    if (s.values[i] < 0.0 && s.values[i] > -1e-9) {
      s.values[i] = 0.0;
      touched = true;
    }
  }
  if (touched) {
    const double sum = s.population_sum();
    for (std::size_t i = 0; i < model::kLevels; ++i) s.values[i] /= sum;
  }
  return s;
}

}  // namespace

void PulseSequence::validate() const {
  require_duration(laser_duration, "laser_duration");
  require_duration(wait_duration, "wait_duration");
  require_duration(rf_duration, "rf_duration");
  rates.validate();
  laser.validate();
  wait.validate();
  rf.validate();
  if (laser.rabi_frequency != 0.0) throw InputError("pulse sequence: laser phase must have Omega_R = 0");
  if (wait.pump_rate != 0.0 || wait.rabi_frequency != 0.0) {
    throw InputError("pulse sequence: wait phase must have W_p = 0 and Omega_R = 0");
  }
  if (rf.pump_rate != 0.0) throw InputError("pulse sequence: RF phase must have W_p = 0");
}

PulseSequence PulseSequence::reference() const {
  PulseSequence ref = *this;
  ref.laser.rabi_frequency = 0.0;
  ref.wait.rabi_frequency = 0.0;
  ref.rf.rabi_frequency = 0.0;
  return ref;
}

PulseSequence PulseSequence::with_rf_duration(double tau) const {
  PulseSequence s = *this;
  s.rf_duration = tau;
  return s;
}

PulseSequence build_sequence(const SequenceSettings& settings) {
  const auto& c = settings.constants;
  if (!(c.pump_rate_saturation > 0.0)) throw InputError("W_p^sat must be > 0");
  PulseSequence seq;
  seq.laser_duration = settings.laser_duration;
  seq.wait_duration = settings.wait_duration;
  seq.rf_duration = settings.rf_duration;
  const double laser_g2 = settings.laser_decoherence.value_or(
      model::gamma_c(settings.pump_rate / c.pump_rate_saturation, c));
  seq.laser = {settings.pump_rate, 0.0, laser_g2};
  seq.wait = {0.0, 0.0, settings.wait_decoherence.value_or(c.gamma_2_dark)};
  seq.rf = {0.0, settings.rabi_frequency, settings.rf_decoherence.value_or(c.gamma_2_dark)};
  seq.rates = settings.rates;
  seq.validate();
  return seq;
}

PulseSequence standard_sequence(double laser_duration, double pump_rate, double rabi_frequency,
                                double rf_duration, const model::TransitionRates& rates) {
  SequenceSettings settings;
  settings.laser_duration = laser_duration;
  settings.pump_rate = pump_rate;
  settings.rabi_frequency = rabi_frequency;
  settings.rf_duration = rf_duration;
  settings.rates = rates;
  return build_sequence(settings);
}

CycleResult run_cycle(const SystemState& state, const PulseSequence& seq, double dt,
                      bool record_trace, double time_offset) {
  seq.validate();
  model::step_count(0.0, dt);  // rejects a bad dt even for empty sequences

  CycleResult result;
  double phase_start = time_offset;
  auto record = [&](std::size_t index, double t, const SystemState& s) {
    // index 0 of a later phase repeats the previous phase's last sample
    if (index == 0 && !result.trace.empty()) return;
    result.trace.push_back({phase_start + t, s});
  };

  double pl = 0.0;
  double prev_t = 0.0;
  double prev_e = model::excited_population(state);
  auto laser_visit = [&](std::size_t index, double t, const SystemState& s) {
    const double e = model::excited_population(s);
    if (index > 0) pl += 0.5 * (t - prev_t) * (prev_e + e);
    prev_t = t;
    prev_e = e;
    if (record_trace) record(index, t, s);
  };
  auto plain_visit = [&](std::size_t index, double t, const SystemState& s) {
    if (record_trace) record(index, t, s);
  };

  SystemState s = clean_boundary(
      model::integrate_visiting(state, seq.rates, seq.laser, seq.laser_duration, dt, laser_visit));
  phase_start += seq.laser_duration;
  s = clean_boundary(
      model::integrate_visiting(s, seq.rates, seq.wait, seq.wait_duration, dt, plain_visit));
  phase_start += seq.wait_duration;
  result.pre_rf_state = s;
  s = clean_boundary(
      model::integrate_visiting(s, seq.rates, seq.rf, seq.rf_duration, dt, plain_visit));

  result.final_state = s;
  result.integrated_pl = pl;
  result.residual = model::max_abs_difference(s, state);
  return result;
}

CycleResult iterate_to_steady_cycle(const PulseSequence& seq, const SteadyCycleOptions& opts) {
  if (!(opts.tol > 0.0)) throw InputError("iterate_to_steady_cycle: tol must be > 0");
  if (opts.max_cycles < 1) throw InputError("iterate_to_steady_cycle: max_cycles must be >= 1");
  seq.validate();

  const double period = seq.laser_duration + seq.wait_duration + seq.rf_duration;
  const bool keep_all = opts.trace == TraceMode::all_cycles;
  const bool keep_any = opts.trace != TraceMode::none;

  SystemState state = SystemState::thermal();
  model::Trace history;
  for (std::size_t cycle = 1; cycle <= opts.max_cycles; ++cycle) {
    const double offset = keep_all ? static_cast<double>(cycle - 1) * period : 0.0;
    CycleResult r = run_cycle(state, seq, opts.dt, keep_any, offset);
    if (keep_all) {
      auto first = r.trace.begin();
      // the first sample of a cycle duplicates the last sample of the previous one
      if (!history.empty() && first != r.trace.end()) ++first;
      history.insert(history.end(), first, r.trace.end());
    }
    state = r.final_state;
    if (r.residual < opts.tol) {
      r.cycles = cycle;
      if (keep_all) r.trace = std::move(history);
      return r;
    }
    if (cycle == opts.max_cycles) {
      throw ConvergenceError("cycle did not converge after " + std::to_string(cycle) +
                                 " cycles (residual " + std::to_string(r.residual) + ")",
                             cycle, r.residual);
    }
  }
  throw std::logic_error("iterate_to_steady_cycle: unreachable");
}

double contrast_at_tau(const PulseSequence& seq, const SteadyCycleOptions& opts) {
  SteadyCycleOptions quiet = opts;
  quiet.trace = TraceMode::none;
  const double signal = iterate_to_steady_cycle(seq, quiet).integrated_pl;
  const double reference = iterate_to_steady_cycle(seq.reference(), quiet).integrated_pl;
  if (!(reference > 0.0)) throw NumericalError("contrast: reference PL is zero");
  return (reference - signal) / reference;
}

void RabiCurve::validate() const {
  if (tau.size() != contrast.size()) throw InputError("Rabi curve: tau and contrast lengths differ");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (!(tau[i] > tau[i - 1])) throw InputError("Rabi curve: tau must be strictly increasing");
  }
}

RabiCurve simulate_rabi_sweep(const PulseSequence& seq_template, std::span<const double> taus,
                              const SweepOptions& opts) {
  if (taus.empty()) throw InputError("simulate_rabi_sweep: tau list is empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!std::isfinite(taus[i]) || taus[i] < 0.0) throw InputError("simulate_rabi_sweep: tau must be >= 0");
    if (i > 0 && !(taus[i] > taus[i - 1])) {
      throw InputError("simulate_rabi_sweep: tau list must be strictly ascending");
    }
  }
  seq_template.validate();

  RabiCurve curve;
  curve.tau.assign(taus.begin(), taus.end());
  curve.contrast.assign(taus.size(), 0.0);
  curve.sequence = seq_template;
  curve.dt = opts.cycle.dt;
  curve.tol = opts.cycle.tol;

  parallel_for(taus.size(), opts.threads, [&](std::size_t i) {
    curve.contrast[i] = contrast_at_tau(seq_template.with_rf_duration(taus[i]), opts.cycle);
  });
  return curve;
}

std::vector<double> tau_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw InputError("tau grid: step must be > 0");
  if (!(start < stop)) throw InputError("tau grid: start must be < stop");
  if (start < 0.0) throw InputError("tau grid: start must be >= 0");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> grid(count);
  // computed from the index so values do not accumulate roundoff
  for (std::size_t i = 0; i < count; ++i) grid[i] = start + static_cast<double>(i) * step;
  return grid;
}

}  // namespace nvrabi::pulse
