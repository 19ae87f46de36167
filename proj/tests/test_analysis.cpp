#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nvrabi/analysis.hpp"
#include "nvrabi/least_squares.hpp"

using namespace nvrabi;
using namespace nvrabi::analysis;

namespace {

std::vector<double> default_taus() { return pulse::tau_grid(0.5e-6, 4e-6, 20e-9); }

std::vector<double> sample(const RabiParams& p, const std::vector<double>& taus) {
  std::vector<double> out;
  for (double t : taus) out.push_back(rabi_model(p, t));
  return out;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

TEST_CASE("least squares recovers an exponential") {
  // y = 3 exp(-0.7 x), exact data
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(0.25 * i);
    y.push_back(3.0 * std::exp(-0.7 * x.back()));
  }
  const auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(20);
    J.resize(20, 2);
    for (int i = 0; i < 20; ++i) {
      const double e = std::exp(-p[1] * x[i]);
      r[i] = p[0] * e - y[i];
      J(i, 0) = e;
      J(i, 1) = -p[0] * x[i] * e;
    }
    return true;
  };
  const auto res = fit::levenberg_marquardt(residual, Eigen::Vector2d(1.0, 0.1), Eigen::Vector2d(1.0, 1.0));
  CHECK(res.status.ok());
  CHECK(res.params[0] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(res.params[1] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(res.residual_rms < 1e-12);
}

TEST_CASE("least squares covariance survives badly scaled parameters") {
  // y = p0 + p1 x on x ~ 1e-6 with p1 ~ 1e7; oracle is s^2 (X^T X)^-1 in closed form
  const int m = 12;
  std::vector<double> x, y;
  for (int i = 0; i < m; ++i) {
    x.push_back(1e-7 * i);
    y.push_back(0.5 + 1e7 * x.back() + (i % 2 ? 1e-3 : -1e-3));
  }
  const auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(m);
    J.resize(m, 2);
    for (int i = 0; i < m; ++i) {
      r[i] = p[0] + p[1] * x[i] - y[i];
      J(i, 0) = 1.0;
      J(i, 1) = x[i];
    }
    return true;
  };
  const auto res = fit::levenberg_marquardt(residual, Eigen::Vector2d(0.0, 1e6), Eigen::Vector2d(1.0, 1e7));
  REQUIRE(res.status.ok());
  double sx = 0, sxx = 0, ss = 0;
  for (int i = 0; i < m; ++i) {
    sx += x[i];
    sxx += x[i] * x[i];
    const double e = res.params[0] + res.params[1] * x[i] - y[i];
    ss += e * e;
  }
  const double s2 = ss / (m - 2), det = m * sxx - sx * sx;
  CHECK(res.covariance(0, 0) == doctest::Approx(s2 * sxx / det).epsilon(1e-6));
  CHECK(res.covariance(1, 1) == doctest::Approx(s2 * m / det).epsilon(1e-6));
  CHECK(res.covariance(0, 1) == doctest::Approx(-s2 * sx / det).epsilon(1e-6));
}

TEST_CASE("least squares flags an unidentifiable parameter") {
  // p0 and p1 only enter as their sum
  const auto residual = [](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    r.resize(5);
    J.resize(5, 2);
    for (int i = 0; i < 5; ++i) {
      r[i] = (p[0] + p[1]) * i - 2.0 * i;
      J(i, 0) = i;
      J(i, 1) = i;
    }
    return true;
  };
  const auto res = fit::levenberg_marquardt(residual, Eigen::Vector2d(0.3, 0.4), Eigen::Vector2d(1.0, 1.0));
  CHECK(res.status.ill_conditioned);
  CHECK_FALSE(res.status.ok());
}

TEST_CASE("rabi model") {
  const RabiParams p{0.02, 1e-6, 1e7, 0.3};
  CHECK(rabi_model(p, 0.0) == doctest::Approx(0.02 * (1.0 - std::cos(0.3))));
  const double t = 0.7e-6;
  CHECK(rabi_model(p, t) == doctest::Approx(0.02 * (1.0 - std::exp(-0.7) * std::cos(7.0 + 0.3))));
}

TEST_CASE("fit recovers a slow-decay set to four digits") {
  const RabiParams truth{0.0206, 1.08e-6, 12.0e6, 0.0};
  const auto taus = default_taus();
  const auto fit = fit_rabi(taus, sample(truth, taus));
  REQUIRE(fit.valid());
  CHECK(rel(fit.params.amplitude, truth.amplitude) < 1e-4);
  CHECK(rel(fit.params.decay_time, truth.decay_time) < 1e-4);
  CHECK(rel(fit.params.angular_frequency, truth.angular_frequency) < 1e-4);
  CHECK(std::abs(fit.params.phase) < 1e-4);
}

TEST_CASE("fit recovers random generator parameters") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ua(0.005, 0.05), ub(0.5e-6, 5e-6), uc(5e6, 30e6),
      ud(-std::numbers::pi / 2, std::numbers::pi / 2);
  const auto taus = default_taus();
  for (int i = 0; i < 25; ++i) {
    const RabiParams truth{ua(rng), ub(rng), uc(rng), ud(rng)};
    CAPTURE(truth.amplitude);
    CAPTURE(truth.decay_time);
    CAPTURE(truth.angular_frequency);
    CAPTURE(truth.phase);
    const auto fit = fit_rabi(taus, sample(truth, taus));
    REQUIRE(fit.valid());
    CHECK(rel(fit.params.amplitude, truth.amplitude) < 1e-4);
    CHECK(rel(fit.params.decay_time, truth.decay_time) < 1e-4);
    CHECK(rel(fit.params.angular_frequency, truth.angular_frequency) < 1e-4);
    CHECK(std::abs(fit.params.phase - truth.phase) < 1e-4);
  }
}

TEST_CASE("fit is invariant to contrast scaling") {
  const RabiParams truth{0.015, 2e-6, 15e6, 0.4};
  const auto taus = default_taus();
  auto data = sample(truth, taus);
  const auto base = fit_rabi(taus, data);
  for (double& v : data) v *= 10.0;
  const auto scaled = fit_rabi(taus, data);
  REQUIRE(base.valid());
  REQUIRE(scaled.valid());
  CHECK(rel(scaled.params.amplitude, 10.0 * base.params.amplitude) < 1e-8);
  CHECK(rel(scaled.params.decay_time, base.params.decay_time) < 1e-8);
  CHECK(rel(scaled.params.angular_frequency, base.params.angular_frequency) < 1e-8);
  CHECK(std::abs(scaled.params.phase - base.params.phase) < 1e-8);
}

TEST_CASE("fit failures are reported, not thrown") {
  const auto taus = default_taus();
  const std::vector<double> flat(taus.size(), 0.01);
  const auto fit = fit_rabi(taus, flat);
  CHECK_FALSE(fit.valid());
  CHECK_FALSE(fit.status.message.empty());
  const std::vector<double> few_t{1e-7, 2e-7, 3e-7}, few_c{0.0, 0.1, 0.0};
  CHECK_FALSE(fit_rabi(few_t, few_c).valid());
}

TEST_CASE("fft frequency estimate") {
  std::vector<double> taus, values;
  for (int i = 0; i < 500; ++i) {
    taus.push_back(20e-9 * i);
    values.push_back(std::cos(2.0 * std::numbers::pi * 2e6 * taus.back()));
  }
  CHECK(fft_bin_width(taus) == doctest::Approx(1.0 / (500 * 20e-9)));
  CHECK(std::abs(fft_rabi_frequency(taus, values) - 2e6) < 0.5 * fft_bin_width(taus));

  auto uneven = taus;
  uneven[10] += 5e-9;
  CHECK_THROWS_AS(fft_rabi_frequency(uneven, values), InputError);
  const std::vector<double> flat(taus.size(), 1.0);
  CHECK_THROWS_AS(fft_rabi_frequency(taus, flat), NumericalError);
  CHECK_THROWS_AS(fft_rabi_frequency(std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)), InputError);
}

TEST_CASE("fft and fit agree within one bin") {
  const RabiParams truth{0.02, 2e-6, 2.0 * std::numbers::pi * 2.3e6, 0.0};
  const auto taus = default_taus();
  const auto data = sample(truth, taus);
  const auto fit = fit_rabi(taus, data);
  REQUIRE(fit.valid());
  const double nu_fit = fit.params.angular_frequency / (2.0 * std::numbers::pi);
  CHECK(std::abs(fft_rabi_frequency(taus, data) - nu_fit) < fft_bin_width(taus));
}

TEST_CASE("field from rabi frequency") {
  CHECK(b_field_from_rabi(28e6) == doctest::Approx(std::numbers::sqrt2));
  CHECK(b_field_from_rabi(2.387e6) == doctest::Approx(0.1206).epsilon(1e-3));
  CHECK(b_field_from_rabi(3e6) == doctest::Approx(3.0 * b_field_from_rabi(1e6)));
  model::PhysicalConstants c;
  c.gyromagnetic_hz_per_mt = 14e6;
  CHECK(b_field_from_rabi(28e6, c) == doctest::Approx(2.0 * std::numbers::sqrt2));
  CHECK_THROWS_AS(b_field_from_rabi(-1.0), InputError);
}

TEST_CASE("second harmonic metric of a pure 2f tone") {
  // 200 samples at 20 ns span an integer number of periods at 2 and 4 MHz
  const RabiParams p{0.02, 1e-6, 2.0 * std::numbers::pi * 2e6, 0.0};
  const double e = 0.003;
  std::vector<double> taus, data;
  for (int i = 0; i < 200; ++i) {
    taus.push_back(20e-9 * i);
    data.push_back(rabi_model(p, taus.back()) + e * std::cos(2.0 * std::numbers::pi * 4e6 * taus.back()));
  }
  CHECK(second_harmonic_residual(taus, data, p) == doctest::Approx(e / std::numbers::sqrt2 / 0.02).epsilon(1e-9));
  CHECK(second_harmonic_residual(taus, sample(p, taus), p) < 1e-15);
}

TEST_CASE("homogeneous stack maps to a flat profile") {
  SyntheticStackParams s;
  s.nx = 8;
  s.ny = 12;
  s.ntau = 256;
  s.uniform_mt = 0.15;
  const auto stack = synthetic_stack(s);
  const auto profile = map_field_profile(stack, 6, 10, 2);
  const double bin_mt = b_field_from_rabi(fft_bin_width(stack.tau));
  for (std::size_t x = 0; x < s.nx; ++x) CHECK(std::abs(profile.b_mt[x] - 0.15) < 0.1 * bin_mt);
  CHECK_THROWS_AS(map_field_profile(stack, 2, 10), InputError);
  CHECK_THROWS_AS(map_field_profile(stack, 6, 0), InputError);
}

TEST_CASE("a column of NaN becomes a missing point") {
  SyntheticStackParams s;
  s.nx = 4;
  s.ny = 10;
  s.uniform_mt = 0.2;
  auto stack = synthetic_stack(s);
  for (std::size_t y = 0; y < s.ny; ++y) {
    for (std::size_t t = 0; t < s.ntau; ++t) stack.at(2, y, t) = std::numeric_limits<float>::quiet_NaN();
  }
  const auto profile = map_field_profile(stack, 5, 10);
  CHECK(std::isnan(profile.b_mt[2]));
  CHECK_FALSE(std::isnan(profile.b_mt[1]));
}

TEST_CASE("wire fit on exact profile data") {
  FieldProfile profile;
  for (int i = 0; i < 60; ++i) {
    profile.x_um.push_back(i);
    profile.b_mt.push_back(10.0 / (i + 57.0 - 3.0));
    profile.nu_hz.push_back(0.0);
  }
  const auto fit = fit_wire_decay(profile, 3.0);
  REQUIRE(fit.valid());
  CHECK(rel(fit.b_w, 57.0) < 1e-3);
  CHECK(rel(fit.a_w, 10.0) < 1e-3);
  CHECK(fit.c_w == 3.0);
}

TEST_CASE("wire fit with 5% multiplicative noise") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.05);
  FieldProfile profile;
  for (int i = 0; i < 100; ++i) {
    profile.x_um.push_back(i);
    profile.b_mt.push_back(10.0 / (i + 57.0) * (1.0 + n(rng)));
    profile.nu_hz.push_back(0.0);
  }
  const auto fit = fit_wire_decay(profile, 0.0);
  REQUIRE(fit.valid());
  CHECK(rel(fit.b_w, 57.0) < 0.1);
}

TEST_CASE("wire fit on a constant profile is flagged") {
  FieldProfile profile;
  for (int i = 0; i < 30; ++i) {
    profile.x_um.push_back(i);
    profile.b_mt.push_back(0.2);
    profile.nu_hz.push_back(0.0);
  }
  CHECK_FALSE(fit_wire_decay(profile, 0.0).valid());
}

TEST_CASE("wire fit on a synthetic stack") {
  SyntheticStackParams s;
  s.nx = 100;
  s.ny = 20;
  s.ntau = 256;
  const auto stack = synthetic_stack(s);
  const auto fit = fit_wire_decay(map_field_profile(stack, 10, 10, 2), 0.0);
  REQUIRE(fit.valid());
  CHECK(std::abs(fit.b_w - 57.0) < 1.0);
}

TEST_CASE("saturation fit round trip") {
  std::vector<SaturationPoint> scan;
  for (double wp : log_space(1e5, 1e9, 40)) scan.push_back({wp, 0.03 * wp / (wp + 1e7)});
  const auto fit = fit_saturation(scan);
  REQUIRE(fit.valid());
  CHECK(rel(fit.pump_rate_sat, 1e7) < 1e-4);
  CHECK(rel(fit.a_p, 0.03) < 1e-4);
}

TEST_CASE("saturation fit in the linear regime is flagged") {
  std::vector<SaturationPoint> scan;
  for (double wp : log_space(1e3, 1e5, 20)) scan.push_back({wp, 0.03 * wp / (wp + 1e7)});
  const auto fit = fit_saturation(scan);
  CHECK(fit.status.ill_conditioned);
  CHECK_FALSE(fit.valid());
}

TEST_CASE("saturation scan of the model") {
  const double pumps[] = {0.0, 1.9e6, 1.9e7};
  const auto scan = saturation_scan(model::TransitionRates{}, pumps);
  CHECK(scan[0].excited_population == 0.0);
  CHECK(scan[1].excited_population > 0.0);
  CHECK(scan[2].excited_population > scan[1].excited_population);
  const double bad[] = {-1.0};
  CHECK_THROWS_AS(saturation_scan(model::TransitionRates{}, bad), InputError);
}

TEST_CASE("intensity, power and saturation parameter") {
  const model::PhysicalConstants c;
  const double i_sat = saturation_intensity(1.9e7);
  CHECK(i_sat == doctest::Approx(1.9e7 * c.light_c * c.planck_h / (c.cross_section * c.wavelength)));
  const double p_sat = saturation_power(i_sat, 18e-6);
  CHECK(p_sat == doctest::Approx(std::numbers::pi * 18e-6 * 18e-6 / 2.0 * i_sat));
  CHECK(saturation_parameter(0.5 * p_sat, p_sat) == doctest::Approx(0.5));
  const auto lg = log_space(1.0, 100.0, 3);
  CHECK(lg[1] == doctest::Approx(10.0));
  CHECK(lg.back() == 100.0);
}

TEST_CASE("optical timescales") {
  const model::TransitionRates rates;
  const double dep = depletion_time(rates, 0.1);
  // after the excited levels empty, n7 decays at the metastable rate
  CHECK(dep == doctest::Approx(1.0 / rates.metastable_decay()).epsilon(0.05));
  CHECK(depletion_time(rates, 0.3) == doctest::Approx(dep).epsilon(0.05));
  const double slow = polarization_time(rates, 0.05);
  const double mid = polarization_time(rates, 0.1);
  const double fast = polarization_time(rates, 0.5);
  CHECK(slow > mid);
  CHECK(mid > fast);
  CHECK_THROWS_AS(polarization_time(rates, 0.1, 1.5), InputError);
  CHECK_THROWS_AS(depletion_time(rates, 0.0), InputError);
}
