// Command-line front end. Exit codes: 0 success, 2 input error, 3 numerical
// failure, 4 fit did not converge.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>

#include "nvrabi/analysis.hpp"
#include "nvrabi/io.hpp"
#include "nvrabi/pulse.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace nvrabi;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kNumericalError = 3;
constexpr int kFitFailed = 4;

std::size_t default_threads() {
  const char* env = std::getenv("NVRABI_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw InputError(fmt::format("NVRABI_THREADS must be a positive integer, got '{}'", env));
  return static_cast<std::size_t>(v);
}

io::RunConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    io::RunConfig c;
    c.validate();
    return c;
  }
  return io::load_config(path);
}

fs::path companion(const fs::path& output, const std::string& suffix) {
  fs::path p = output;
  p.replace_filename(output.stem().string() + suffix);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

// Effective config next to the main output, e.g. curve.csv -> curve.config.ini.
void embed_config(const fs::path& output, const io::RunConfig& config) {
  write_text(companion(output, ".config.ini"), io::serialize_config(config));
}

ordered_json number(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json status_json(const fit::FitStatus& s) {
  return {{"converged", s.converged},
          {"ill_conditioned", s.ill_conditioned},
          {"iterations", s.iterations},
          {"condition_number", number(s.condition_number)},
          {"message", s.message}};
}

ordered_json rabi_report(std::span<const double> tau, std::span<const double> contrast,
                         const analysis::RabiFit& f) {
  const auto sd = [&](int i) { return number(std::sqrt(f.covariance(i, i))); };
  ordered_json j;
  j["a_R"] = number(f.params.amplitude);
  j["b_R_s"] = number(f.params.decay_time);
  j["c_R_rad_per_s"] = number(f.params.angular_frequency);
  j["d_R_rad"] = number(f.params.phase);
  j["stderr"] = {{"a_R", sd(0)}, {"b_R_s", sd(1)}, {"c_R_rad_per_s", sd(2)}, {"d_R_rad", sd(3)}};
  j["residual_rms"] = number(f.residual_rms);
  j["nu_R_Hz"] = number(f.params.angular_frequency / (2.0 * std::numbers::pi));
  try {
    j["nu_R_fft_Hz"] = number(analysis::fft_rabi_frequency(tau, contrast));
  } catch (const std::exception&) {
    j["nu_R_fft_Hz"] = nullptr;
  }
  try {
    j["second_harmonic"] = f.valid() ? number(analysis::second_harmonic_residual(tau, contrast, f.params))
                                     : ordered_json(nullptr);
  } catch (const std::exception&) {
    j["second_harmonic"] = nullptr;
  }
  j["status"] = status_json(f.status);
  return j;
}

void emit_report(const ordered_json& report, const fs::path& path) {
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  write_text(path, text);
}

int simulate_populations(const std::string& config_path, const fs::path& output, bool all_cycles) {
  const auto config = load_or_default(config_path);
  auto opts = config.cycle_options();
  opts.trace = all_cycles ? pulse::TraceMode::all_cycles : pulse::TraceMode::last_cycle;
  const auto result = pulse::iterate_to_steady_cycle(config.sequence(), opts);
  io::write_csv_file(output, io::trace_table(result.trace));
  embed_config(output, config);
  fmt::print(stderr, "converged after {} cycles (residual {:.3g})\n", result.cycles, result.residual);
  return kOk;
}

int simulate_rabi(const std::string& config_path, const fs::path& output, bool fit_flag,
                  const std::string& report_path) {
  const auto config = load_or_default(config_path);
  const auto taus = config.taus();
  pulse::SweepOptions opts;
  opts.cycle = config.cycle_options();
  opts.threads = default_threads();
  auto curve = pulse::simulate_rabi_sweep(config.sequence(), taus, opts);
  if (config.contrast_sigma > 0.0) {
    // drawn in tau order, so the noise does not depend on the thread count
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> noise(0.0, config.contrast_sigma);
    for (double& c : curve.contrast) c += noise(rng);
  }
  io::write_csv_file(output, io::curve_table(curve));
  embed_config(output, config);
  if (!fit_flag) return kOk;

  const auto f = analysis::fit_rabi(curve);
  emit_report(rabi_report(curve.tau, curve.contrast, f),
              report_path.empty() ? companion(output, ".fit.json") : fs::path(report_path));
  return f.valid() ? kOk : kFitFailed;
}

int fit_rabi_cmd(const fs::path& input, const std::vector<double>& guess, const std::string& report_path) {
  const auto table = io::read_csv_file(input);
  const auto tau = table.column("tau_s");
  const auto contrast = table.column("contrast");
  if (tau.size() < 8) throw InputError(fmt::format("{}: need at least 8 rows, found {}", input.string(), tau.size()));
  std::optional<analysis::RabiParams> start;
  if (!guess.empty()) start = analysis::RabiParams{guess[0], guess[1], guess[2], guess[3]};
  const auto f = analysis::fit_rabi(tau, contrast, start);
  const auto report = rabi_report(tau, contrast, f);
  if (report_path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    emit_report(report, report_path);
  }
  if (!f.valid()) {
    fmt::print(stderr, "fit did not converge: {}\n", f.status.message);
    return kFitFailed;
  }
  return kOk;
}

struct SaturationFlags {
  std::optional<double> wp_min, wp_max, power, waist;
  std::optional<std::size_t> points;
};

int saturation_cmd(const std::string& config_path, const fs::path& output, const SaturationFlags& flags,
                   const std::string& report_path) {
  auto config = load_or_default(config_path);
  if (flags.wp_min) config.scan_pump_rate_min = *flags.wp_min;
  if (flags.wp_max) config.scan_pump_rate_max = *flags.wp_max;
  if (flags.points) config.scan_points = *flags.points;
  if (flags.power) config.laser_power = *flags.power;
  if (flags.waist) config.beam_waist = *flags.waist;
  config.validate();

  const auto grid = analysis::log_space(config.scan_pump_rate_min, config.scan_pump_rate_max, config.scan_points);
  const auto scan = analysis::saturation_scan(config.rates, grid);
  io::write_csv_file(output, io::saturation_table(scan));
  embed_config(output, config);

  const auto f = analysis::fit_saturation(scan);
  ordered_json j;
  j["W_p_sat_per_s"] = number(f.pump_rate_sat);
  j["W_p_sat_stderr"] = number(std::sqrt(f.covariance(1, 1)));
  j["a_P"] = number(f.a_p);
  j["residual_rms"] = number(f.residual_rms);
  if (f.valid()) {
    const double i_sat = analysis::saturation_intensity(f.pump_rate_sat, config.constants);
    const double p_sat = analysis::saturation_power(i_sat, config.beam_waist);
    j["I_sat_W_per_m2"] = number(i_sat);
    j["I_sat_mW_per_um2"] = number(i_sat * 1e3 * 1e-12);
    j["beam_waist_m"] = number(config.beam_waist);
    j["P_sat_W"] = number(p_sat);
    j["laser_power_W"] = number(config.laser_power);
    j["s"] = number(analysis::saturation_parameter(config.laser_power, p_sat));
  }
  j["status"] = status_json(f.status);
  emit_report(j, report_path.empty() ? companion(output, ".fit.json") : fs::path(report_path));
  return f.valid() ? kOk : kFitFailed;
}

struct MapFlags {
  std::string stack;
  std::size_t y_center = 0;
  std::size_t window = 10;
  std::optional<double> c_w, x_min, x_max;
  std::string config;
  std::string report;
};

int map_rf(const MapFlags& flags, const fs::path& output) {
  const auto config = load_or_default(flags.config);
  const auto stack = io::read_stack_file(flags.stack);
  const auto profile = analysis::map_field_profile(stack, flags.y_center, flags.window, default_threads(),
                                                   config.constants);
  io::write_csv_file(output, io::profile_table(profile));
  if (!flags.config.empty()) embed_config(output, config);
  if (!flags.c_w) return kOk;

  const auto f = analysis::fit_wire_decay(profile, *flags.c_w, flags.x_min, flags.x_max);
  ordered_json j;
  j["a_W_mT_um"] = number(f.a_w);
  j["b_W_um"] = number(f.b_w);
  j["c_W_um"] = number(f.c_w);
  j["stderr"] = {{"a_W_mT_um", number(std::sqrt(f.covariance(0, 0)))},
                 {"b_W_um", number(std::sqrt(f.covariance(1, 1)))}};
  j["residual_rms"] = number(f.residual_rms);
  j["status"] = status_json(f.status);
  emit_report(j, flags.report.empty() ? companion(output, ".fit.json") : fs::path(flags.report));
  return f.valid() ? kOk : kFitFailed;
}

struct SynthFlags {
  analysis::SyntheticStackParams params;
  bool big_endian = false;
};

int synth_stack(const SynthFlags& f, const fs::path& output) {
  const auto stack = analysis::synthetic_stack(f.params);
  io::write_stack_file(output, stack, f.big_endian ? io::ByteOrder::big : io::ByteOrder::little);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seven-level NV centre Rabi simulation and widefield RF mapping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nvrabi 0.1.0");

  std::string config_path, output, report;
  bool fit_flag = false, all_cycles = false;

  auto* pop = app.add_subcommand("simulate-populations", "Population trace of the converged pulse cycle");
  pop->add_option("-c,--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  pop->add_option("-o,--output", output, "Trace CSV")->required();
  pop->add_flag("--all-cycles", all_cycles, "Trace every cycle from the thermal state");

  auto* rabi = app.add_subcommand("simulate-rabi", "Rabi curve over the configured tau grid");
  rabi->add_option("-c,--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  rabi->add_option("-o,--output", output, "Curve CSV")->required();
  rabi->add_flag("--fit", fit_flag, "Fit the damped cosine and write a report");
  rabi->add_option("--report", report, "Fit report path (default <output stem>.fit.json)");

  std::string input;
  std::vector<double> guess;
  auto* fit = app.add_subcommand("fit-rabi", "Fit a_R (1 - exp(-tau/b_R) cos(c_R tau + d_R)) to a curve CSV");
  fit->add_option("-i,--input", input, "CSV with tau_s and contrast columns")->required()->check(CLI::ExistingFile);
  fit->add_option("--guess", guess, "Initial a_R b_R c_R d_R")->expected(4);
  fit->add_option("--report", report, "Also write the report to this path");

  SaturationFlags sat_flags;
  auto* sat = app.add_subcommand("saturation", "Steady-state n_E scan and saturation fit");
  sat->add_option("-c,--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  sat->add_option("-o,--output", output, "Scan CSV")->required();
  sat->add_option("--wp-min", sat_flags.wp_min, "Lowest pump rate, 1/s");
  sat->add_option("--wp-max", sat_flags.wp_max, "Highest pump rate, 1/s");
  sat->add_option("--points", sat_flags.points, "Log-spaced scan points");
  sat->add_option("--power", sat_flags.power, "Laser power for the reported s, W");
  sat->add_option("--waist", sat_flags.waist, "Beam waist w0, m");
  sat->add_option("--report", report, "Report path (default <output stem>.fit.json)");

  MapFlags map_flags;
  auto* map = app.add_subcommand("map-rf", "RF field profile from a contrast stack");
  map->add_option("-s,--stack", map_flags.stack, "Stack file")->required()->check(CLI::ExistingFile);
  map->add_option("-y,--y-center", map_flags.y_center, "Centre row of the averaging window")->required();
  map->add_option("-w,--window", map_flags.window, "Rows averaged per column")->capture_default_str();
  map->add_option("--c-w", map_flags.c_w, "Wire edge position c_W in um; enables the wire fit");
  map->add_option("--x-min", map_flags.x_min, "Fit range start, um");
  map->add_option("--x-max", map_flags.x_max, "Fit range end, um");
  map->add_option("-c,--config", map_flags.config, "Run configuration file (constants)")->check(CLI::ExistingFile);
  map->add_option("-o,--output", output, "Profile CSV")->required();
  map->add_option("--report", map_flags.report, "Wire fit report path (default <output stem>.fit.json)");

  SynthFlags synth;
  auto* gen = app.add_subcommand("synth-stack", "Write a synthetic contrast stack");
  gen->add_option("-o,--output", output, "Stack file")->required();
  gen->add_option("--nx", synth.params.nx)->capture_default_str();
  gen->add_option("--ny", synth.params.ny)->capture_default_str();
  gen->add_option("--ntau", synth.params.ntau)->capture_default_str();
  gen->add_option("--um-per-pixel", synth.params.um_per_pixel)->capture_default_str();
  gen->add_option("--tau-start", synth.params.tau_start)->capture_default_str();
  gen->add_option("--tau-step", synth.params.tau_step)->capture_default_str();
  gen->add_option("--amplitude", synth.params.amplitude)->capture_default_str();
  gen->add_option("--decay", synth.params.decay, "Envelope decay time, s")->capture_default_str();
  gen->add_option("--uniform-mt", synth.params.uniform_mt, "Homogeneous field, mT");
  gen->add_option("--a-w", synth.params.a_w, "mT um")->capture_default_str();
  gen->add_option("--b-w", synth.params.b_w, "um")->capture_default_str();
  gen->add_option("--c-w", synth.params.c_w, "um")->capture_default_str();
  gen->add_option("--noise", synth.params.noise, "Gaussian noise sigma on contrast")->capture_default_str();
  gen->add_option("--seed", synth.params.seed)->capture_default_str();
  gen->add_flag("--big-endian", synth.big_endian, "Write the payload big-endian");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*pop) return simulate_populations(config_path, output, all_cycles);
    if (*rabi) return simulate_rabi(config_path, output, fit_flag, report);
    if (*fit) return fit_rabi_cmd(input, guess, report);
    if (*sat) return saturation_cmd(config_path, output, sat_flags, report);
    if (*map) return map_rf(map_flags, output);
    if (*gen) return synth_stack(synth, output);
  } catch (const InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInputError;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumericalError;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumericalError;
  }
  return kInputError;
}
