#include "nvrabi/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <string>

namespace nvrabi::model {

namespace {

void require_rate(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0) {
    throw InputError(std::string("rate ") + name + " must be finite and >= 0, got " +
                     std::to_string(value));
  }
}

}  // namespace

void TransitionRates::validate() const {
  require_rate(k41, "k41");
  require_rate(k52, "k52");
  require_rate(k63, "k63");
  require_rate(k47, "k47");
  require_rate(k57, "k57");
  require_rate(k67, "k67");
  require_rate(k71, "k71");
  require_rate(k72, "k72");
  require_rate(k73, "k73");
}

double TransitionRates::excited_decay(int level) const {
  switch (level) {
    case 4: return k41 + k47;
    case 5: return k52 + k57;
    case 6: return k63 + k67;
    default: throw InputError("excited_decay: level must be 4, 5 or 6");
  }
}

bool TransitionRates::all_zero() const {
  return k41 == 0 && k52 == 0 && k63 == 0 && k47 == 0 && k57 == 0 && k67 == 0 &&
         k71 == 0 && k72 == 0 && k73 == 0;
}

void DriveParams::validate() const {
  require_rate(pump_rate, "W_p");
  require_rate(rabi_frequency, "Omega_R");
  require_rate(decoherence_rate, "Gamma_2");
}

SystemState SystemState::thermal() {
  SystemState s;
  s.values = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  return s;
}

SystemState SystemState::in_level(int level) {
  if (level < 1 || level > static_cast<int>(kLevels)) {
    throw InputError("in_level: level must be in 1..7");
  }
  SystemState s;
  s.population(level) = 1.0;
  return s;
}

double SystemState::population_sum() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < kLevels; ++i) sum += values[i];
  return sum;
}

double SystemState::ground_polarization() const {
  const double g = ground_population();
  return g > 0.0 ? values[0] / g : 0.0;
}

double max_abs_difference(const SystemState& a, const SystemState& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < kStateSize; ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

StateDerivative derivative(const SystemState& state, const TransitionRates& rates,
                           const DriveParams& drive) {
  rates.validate();
  drive.validate();
  for (std::size_t i = 0; i < kStateSize; ++i) {
    if (!std::isfinite(state.values[i])) {
      throw InputError("derivative: state entry " + std::to_string(i) + " is not finite");
    }
  }
  return detail::rate_derivative(state.values, rates, drive);
}

void throw_non_finite(std::size_t step, double time) {
  throw NumericalError("integrate: non-finite state at step " + std::to_string(step) +
                       " (t = " + std::to_string(time) + " s)");
}

std::size_t step_count(double duration, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("integrate: dt must be > 0");
  if (!(duration >= 0.0) || !std::isfinite(duration)) {
    throw InputError("integrate: duration must be >= 0");
  }
  if (duration == 0.0) return 0;
  // The relative slack keeps durations that are whole multiples of dt from
  // picking up an extra step through roundoff.
  const double ratio = duration / dt;
  const auto n = static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12)));
  return std::max<std::size_t>(n, 1);
}

IntegrationResult integrate(const SystemState& state, const TransitionRates& rates,
                            const DriveParams& drive, double duration, double dt,
                            bool record_trace) {
  rates.validate();
  drive.validate();
  const std::size_t n = step_count(duration, dt);
  for (double v : state.values) {
    if (!std::isfinite(v)) throw InputError("integrate: initial state is not finite");
  }

  IntegrationResult result;
  if (n == 0) {
    result.final_state = state;
    return result;
  }
  if (record_trace) result.trace.reserve(n + 1);
  result.final_state = integrate_visiting(
      state, rates, drive, duration, dt, [&](std::size_t, double t, const SystemState& s) {
        if (record_trace) result.trace.push_back({t, s});
      });
  return result;
}

SystemState steady_state(const TransitionRates& rates, const DriveParams& drive,
                         const SystemState& initial) {
  rates.validate();
  drive.validate();
  if (drive.rabi_frequency != 0.0) {
    throw InputError("steady_state: requires Omega_R = 0 (linear rate system)");
  }
  if (rates.all_zero()) throw NumericalError("steady_state: rate matrix is degenerate (all rates zero)");

  SystemState out;
  if (drive.pump_rate == 0.0) {
    // Ground levels are absorbing. Route excited and metastable population
    // into them by branching ratios.
    const auto& n = initial.values;
    const std::array<double, 3> radiative{rates.k41, rates.k52, rates.k63};
    const std::array<double, 3> crossing{rates.k47, rates.k57, rates.k67};
    double metastable = n[6];
    std::array<double, 3> ground{n[0], n[1], n[2]};
    for (std::size_t i = 0; i < 3; ++i) {
      const double total = radiative[i] + crossing[i];
      if (n[3 + i] == 0.0) continue;
      if (total == 0.0) throw NumericalError("steady_state: excited level has no decay channel");
      ground[i] += n[3 + i] * radiative[i] / total;
      metastable += n[3 + i] * crossing[i] / total;
    }
    if (metastable != 0.0) {
      const double total = rates.metastable_decay();
      if (total == 0.0) throw NumericalError("steady_state: metastable level has no decay channel");
      ground[0] += metastable * rates.k71 / total;
      ground[1] += metastable * rates.k72 / total;
      ground[2] += metastable * rates.k73 / total;
    }
    const double sum = ground[0] + ground[1] + ground[2];
    if (!(sum > 0.0)) throw InputError("steady_state: initial state carries no population");
    for (std::size_t i = 0; i < 3; ++i) out.values[i] = ground[i] / sum;
    return out;
  }

  const double wp = drive.pump_rate;
  Eigen::Matrix<double, 7, 7> m = Eigen::Matrix<double, 7, 7>::Zero();
  m(0, 0) = -wp; m(0, 3) = rates.k41; m(0, 6) = rates.k71;
  m(1, 1) = -wp; m(1, 4) = rates.k52; m(1, 6) = rates.k72;
  m(2, 2) = -wp; m(2, 5) = rates.k63; m(2, 6) = rates.k73;
  m(3, 0) = wp; m(3, 3) = -(rates.k41 + rates.k47);
  m(4, 1) = wp; m(4, 4) = -(rates.k52 + rates.k57);
  m(5, 2) = wp; m(5, 5) = -(rates.k63 + rates.k67);
  m(6, 3) = rates.k47; m(6, 4) = rates.k57; m(6, 5) = rates.k67;
  m(6, 6) = -rates.metastable_decay();

  // The rows of m sum to zero, so one balance equation is redundant; replace
  // it with the normalization.
  Eigen::Matrix<double, 7, 7> a = m / m.cwiseAbs().maxCoeff();
  a.row(6).setOnes();
  Eigen::Matrix<double, 7, 1> rhs = Eigen::Matrix<double, 7, 1>::Zero();
  rhs(6) = 1.0;

  Eigen::FullPivLU<Eigen::Matrix<double, 7, 7>> lu(a);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw NumericalError("steady_state: rate matrix is degenerate");
  const Eigen::Matrix<double, 7, 1> x = lu.solve(rhs);
  for (std::size_t i = 0; i < kLevels; ++i) {
    // roundoff can leave tiny negatives on near-empty levels
    out.values[i] = std::max(0.0, x(static_cast<Eigen::Index>(i)));
  }
  const double sum = out.population_sum();
  for (std::size_t i = 0; i < kLevels; ++i) out.values[i] /= sum;
  out.values[7] = 0.0;
  return out;
}

double gamma_c(double saturation, const PhysicalConstants& constants) {
  if (!(saturation >= 0.0) || !std::isfinite(saturation)) {
    throw InputError("gamma_c: saturation parameter must be >= 0");
  }
  return constants.gamma_c_inf * saturation / (saturation + 1.0);
}

}  // namespace nvrabi::model
