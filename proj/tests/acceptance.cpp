// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "nvrabi/analysis.hpp"
#include "nvrabi/io.hpp"

#include <unistd.h>

using namespace nvrabi;

namespace {

struct Criterion {
  int id;
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(fmt::format("{}{}", ok ? "" : "[x] ", what));
  }
};

bool report(const Criterion& c) {
  fmt::print("criterion {}: {}", c.id, c.pass ? "PASS" : "FAIL");
  for (std::size_t i = 0; i < c.notes.size(); ++i) fmt::print("{}{}", i ? "; " : " | ", c.notes[i]);
  fmt::print("\n");
  std::fflush(stdout);
  return c.pass;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

constexpr double kOmega = 1.5e7;

io::RunConfig base_config(double laser, double s) {
  io::RunConfig cfg;
  cfg.laser_duration = laser;
  cfg.pump_rate.reset();
  cfg.saturation = s;
  return cfg;
}

struct Sweep {
  pulse::RabiCurve curve;
  analysis::RabiFit fit;
  double h2 = 0.0;
  double seconds = 0.0;
};

Sweep run_sweep(const io::RunConfig& cfg, std::size_t threads = 0) {
  pulse::SweepOptions opts;
  opts.cycle = cfg.cycle_options();
  opts.threads = threads;
  const auto start = std::chrono::steady_clock::now();
  Sweep s;
  s.curve = pulse::simulate_rabi_sweep(cfg.sequence(), cfg.taus(), opts);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  s.fit = analysis::fit_rabi(s.curve);
  if (s.fit.valid() && s.fit.params.amplitude > 0.0) {
    s.h2 = analysis::second_harmonic_residual(s.curve.tau, s.curve.contrast, s.fit.params);
  } else {
    s.h2 = std::nan("");
  }
  return s;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return true;
}

std::string join(const std::vector<double>& v, const char* fmtstr) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " > " : "") + fmt::format(fmt::runtime(fmtstr), v[i]);
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string csv_text(const io::CsvTable& t) {
  std::ostringstream out;
  io::write_csv(out, t);
  return out.str();
}

double pre_rf_polarization(double laser, double rf) {
  auto cfg = base_config(laser, 0.1);
  cfg.rf_duration = rf;
  return pulse::iterate_to_steady_cycle(cfg.sequence(), cfg.cycle_options()).pre_rf_state.ground_polarization();
}

}  // namespace

int main() {
  bool all = true;

  // Sweeps shared by criteria 1, 2 and 7.
  const auto long_laser = run_sweep(base_config(10e-6, 0.1));
  const auto short_laser = run_sweep(base_config(1e-6, 0.1));

  {
    Criterion c{1};
    for (const auto* s : {&long_laser, &short_laser}) {
      const double l_us = s->curve.sequence.laser_duration * 1e6;
      const double c_r = s->fit.params.angular_frequency;
      c.check(s->fit.valid() && rel(c_r, kOmega) <= 0.02,
              fmt::format("L={:g}us c_R={:.5g} rad/s ({:+.3f}%)", l_us, c_r, 100.0 * (c_r / kOmega - 1.0)));
      c.check(s->seconds < 60.0, fmt::format("L={:g}us sweep {:.1f}s", l_us, s->seconds));
    }
    all &= report(c);
  }

  {
    Criterion c{2};
    std::vector<double> a_s, h_s, a_l, h_l;
    for (double s : {0.06, 0.1, 0.2}) {
      const auto sw = s == 0.1 ? short_laser : run_sweep(base_config(1e-6, s));
      a_s.push_back(sw.fit.params.amplitude);
      h_s.push_back(sw.h2);
    }
    for (double l : {1e-6, 2e-6, 5e-6, 10e-6}) {
      const auto sw = l == 1e-6 ? short_laser : l == 10e-6 ? long_laser : run_sweep(base_config(l, 0.1));
      a_l.push_back(sw.fit.params.amplitude);
      h_l.push_back(sw.h2);
    }
    c.check(strictly_decreasing(a_s), "a_R over s 0.06,0.1,0.2: " + join(a_s, "{:.5f}"));
    c.check(strictly_decreasing(h_s), "h2 over s: " + join(h_s, "{:.5f}"));
    c.check(strictly_decreasing(a_l), "a_R over L 1,2,5,10us: " + join(a_l, "{:.5f}"));
    c.check(strictly_decreasing(h_l), "h2 over L: " + join(h_l, "{:.5f}"));
    all &= report(c);
  }

  {
    Criterion c{3};
    const double pi_t = std::numbers::pi / kOmega;
    const double p1 = pre_rf_polarization(1e-6, pi_t), p2 = pre_rf_polarization(1e-6, 2.0 * pi_t);
    const double q1 = pre_rf_polarization(10e-6, pi_t), q2 = pre_rf_polarization(10e-6, 2.0 * pi_t);
    c.check(p2 > p1, fmt::format("1us: 2pi {:.4f} > pi {:.4f}", p2, p1));
    c.check(rel(q1, q2) < 0.01, fmt::format("10us: pi {:.4f} vs 2pi {:.4f} ({:.2f}%)", q1, q2, 100.0 * rel(q1, q2)));
    all &= report(c);
  }

  {
    Criterion c{4};
    const io::RunConfig cfg;
    const auto scan = analysis::saturation_scan(
        cfg.rates, analysis::log_space(cfg.scan_pump_rate_min, cfg.scan_pump_rate_max, cfg.scan_points));
    const auto fit = analysis::fit_saturation(scan);
    const double wsat = fit.pump_rate_sat;
    const double i_sat = analysis::saturation_intensity(wsat, cfg.constants);
    const double i_mw_um2 = i_sat * 1e3 / 1e12;
    const double p_sat = analysis::saturation_power(i_sat, 18e-6);
    const double s75 = analysis::saturation_parameter(0.075, p_sat);
    const double s250 = analysis::saturation_parameter(0.250, p_sat);
    c.check(fit.valid(), "fit valid");
    c.check(rel(wsat, 1.9e7) <= 0.10, fmt::format("W_p^sat={:.4g}/s", wsat));
    c.check(rel(i_mw_um2, 2.3) <= 0.03, fmt::format("I_sat={:.4f} mW/um^2", i_mw_um2));
    c.check(rel(p_sat, 1.2) <= 0.03, fmt::format("P_sat={:.4f} W", p_sat));
    c.check(rel(s75, 0.06) <= 0.10, fmt::format("s(75mW)={:.4f}", s75));
    c.check(rel(s250, 0.2) <= 0.10, fmt::format("s(250mW)={:.4f}", s250));
    all &= report(c);
  }

  {
    Criterion c{5};
    const model::TransitionRates rates;
    std::vector<double> dep;
    for (double s : {0.06, 0.1, 0.2, 0.5}) dep.push_back(analysis::depletion_time(rates, s));
    const double tpol = analysis::polarization_time(rates, 0.1);
    const auto [lo, hi] = std::minmax_element(dep.begin(), dep.end());
    c.check(dep[1] >= 300e-9 && dep[1] <= 500e-9, fmt::format("depletion(s=0.1)={:.1f}ns", dep[1] * 1e9));
    c.check(tpol >= 7e-6 && tpol <= 13e-6, fmt::format("polarization(s=0.1)={:.2f}us", tpol * 1e6));
    c.check((*hi - *lo) / *lo <= 0.05,
            fmt::format("depletion spread over s 0.06..0.5 {:.2f}%", 100.0 * (*hi - *lo) / *lo));
    all &= report(c);
  }

  {
    Criterion c{6};
    const model::TransitionRates rates;
    // population sum after every cycle of a convergence run
    auto pi_cfg = base_config(1e-6, 0.1);
    pi_cfg.rf_duration = std::numbers::pi / kOmega;
    const auto seq = pi_cfg.sequence();
    model::SystemState st = model::SystemState::thermal();
    double worst_sum = 0.0;
    for (int i = 0; i < 50; ++i) {
      st = pulse::run_cycle(st, seq, 1e-9).final_state;
      worst_sum = std::max(worst_sum, std::abs(st.population_sum() - 1.0));
    }
    c.check(worst_sum < 1e-9, fmt::format("population sum error {:.2e}", worst_sum));

    model::TransitionRates none;
    none.k41 = none.k52 = none.k63 = none.k47 = none.k57 = none.k67 = none.k71 = none.k72 = none.k73 = 0.0;
    const auto two = model::integrate(model::SystemState::in_level(1), none, {0.0, kOmega, 0.0}, 2e-6, 1e-9);
    double worst_rabi = 0.0;
    for (const auto& p : two.trace) {
      worst_rabi = std::max(worst_rabi, std::abs(p.state.population(1) - 0.5 * (1.0 + std::cos(kOmega * p.time))));
    }
    c.check(worst_rabi < 1e-6, fmt::format("two-level oracle error {:.2e}", worst_rabi));

    double worst_ss = 0.0;
    for (double wp : {1.9e6, 1.9e7, 1.9e8}) {
      const model::DriveParams d{wp, 0.0, 0.0};
      const auto run = model::integrate(model::SystemState::thermal(), rates, d, 100e-6, 1e-9, false).final_state;
      worst_ss = std::max(worst_ss, model::max_abs_difference(model::steady_state(rates, d), run));
    }
    c.check(worst_ss < 1e-7, fmt::format("steady state vs 100us integration {:.2e}", worst_ss));

    auto cycle_at = [&](double dt) { return pulse::run_cycle(model::SystemState::thermal(), seq, dt).final_state; };
    const double halving = model::max_abs_difference(cycle_at(1e-9), cycle_at(0.5e-9));
    c.check(halving < 1e-8, fmt::format("step halving change {:.2e}", halving));
    all &= report(c);
  }

  {
    Criterion c{7};
    const analysis::RabiParams truth{0.0206, 1.08e-6, 12.0e6, 0.0};
    const auto taus = pulse::tau_grid(0.5e-6, 4e-6, 20e-9);
    std::vector<double> data;
    for (double t : taus) data.push_back(analysis::rabi_model(truth, t));
    const auto fit = analysis::fit_rabi(taus, data);
    const double worst = std::max({rel(fit.params.amplitude, truth.amplitude),
                                   rel(fit.params.decay_time, truth.decay_time),
                                   rel(fit.params.angular_frequency, truth.angular_frequency),
                                   std::abs(fit.params.phase)});
    c.check(fit.valid() && worst < 5e-5, fmt::format("example set worst relative error {:.1e}", worst));

    analysis::SyntheticStackParams params;  // 64 x 20 x 128, b_W = 57 um
    const auto stack = analysis::synthetic_stack(params);
    const auto wire = analysis::fit_wire_decay(analysis::map_field_profile(stack, 10, 10, 0), params.c_w);
    c.check(wire.valid() && std::abs(wire.b_w - 57.0) <= 1.0, fmt::format("wire b_W={:.3f}um", wire.b_w));

    for (const auto* s : {&long_laser, &short_laser}) {
      const double nu_fft = analysis::fft_rabi_frequency(s->curve.tau, s->curve.contrast);
      const double nu_fit = s->fit.params.angular_frequency / (2.0 * std::numbers::pi);
      const double bin = analysis::fft_bin_width(s->curve.tau);
      c.check(std::abs(nu_fft - nu_fit) <= bin,
              fmt::format("L={:g}us FFT-fit {:.3f} bins", s->curve.sequence.laser_duration * 1e6,
                          (nu_fft - nu_fit) / bin));
    }
    all &= report(c);
  }

  {
    Criterion c{8};
    const auto dir = std::filesystem::temp_directory_path() / fmt::format("nvrabi_accept_{}", ::getpid());
    std::filesystem::create_directories(dir);
    analysis::SyntheticStackParams params;
    params.noise = 2e-3;
    const auto stack = analysis::synthetic_stack(params);
    bool stack_ok = true;
    for (auto order : {io::ByteOrder::little, io::ByteOrder::big}) {
      io::write_stack_file(dir / "a.nvs", stack, order);
      const auto back = io::read_stack_file(dir / "a.nvs");
      io::write_stack_file(dir / "b.nvs", back, order);
      stack_ok = stack_ok && back.tau == stack.tau &&
                 std::memcmp(back.contrast.data(), stack.contrast.data(), 4 * stack.contrast.size()) == 0;
      std::ifstream a(dir / "a.nvs", std::ios::binary), b(dir / "b.nvs", std::ios::binary);
      std::stringstream sa, sb;
      sa << a.rdbuf();
      sb << b.rdbuf();
      stack_ok = stack_ok && sa.str() == sb.str();
    }
    c.check(stack_ok, "StackFile round trip bit-exact (little and big endian)");

    const auto table = io::curve_table(short_laser.curve);
    io::write_csv_file(dir / "c.csv", table);
    const auto back = io::read_csv_file(dir / "c.csv");
    c.check(back.rows == table.rows && csv_text(back) == csv_text(table), "CSV round trip bit-exact");

    auto cfg = base_config(1e-6, 0.1);
    cfg.tau_stop = 1.5e-6;
    const auto h1 = fnv1a(csv_text(io::curve_table(run_sweep(cfg, 1).curve)));
    const auto h3 = fnv1a(csv_text(io::curve_table(run_sweep(cfg, 3).curve)));
    c.check(h1 == h3, fmt::format("sweep hash threads=1 {:016x} threads=3 {:016x}", h1, h3));
    std::filesystem::remove_all(dir);
    all &= report(c);
  }

  return all ? 0 : 1;
}
