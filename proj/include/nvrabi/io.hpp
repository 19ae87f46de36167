#pragma once

// Run configuration, contrast-stack files and CSV tables.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nvrabi/analysis.hpp"
#include "nvrabi/model.hpp"
#include "nvrabi/pulse.hpp"

namespace nvrabi::io {

// Config problem tied to a source line (0 when the problem is not on one line).
class ConfigError : public InputError {
 public:
  ConfigError(const std::string& what, std::size_t line) : InputError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Everything a CLI run depends on. Sections and keys of the text form:
//   [rates]      k41 k52 k63 k47 k57 k67 k71 k72 k73
//   [constants]  gamma_c_inf gyromagnetic_hz_per_mt cross_section wavelength
//                planck_h light_c gamma_2_dark pump_rate_saturation
//   [sequence]   laser_duration wait_duration rf_duration
//   [drive]      pump_rate | saturation, rabi_frequency,
//                gamma2_laser gamma2_wait gamma2_rf
//   [sweep]      tau_start tau_stop tau_step
//   [solver]     dt tol max_cycles
//   [noise]      seed contrast_sigma
//   [saturation] pump_rate_min pump_rate_max points laser_power beam_waist
struct RunConfig {
  model::TransitionRates rates;
  model::PhysicalConstants constants;

  double laser_duration = 10e-6;  // s
  double wait_duration = 400e-9;  // s
  double rf_duration = 0.0;       // s, used by simulate-populations

  // Exactly one is set. s converts via W_p = s * W_p^sat.
  std::optional<double> pump_rate = 1.9e6;
  std::optional<double> saturation;
  double rabi_frequency = 1.5e7;  // rad/s
  // Unset: Gamma_c(s) under the laser, 1/T2* in the dark.
  std::optional<double> gamma2_laser;
  std::optional<double> gamma2_wait;
  std::optional<double> gamma2_rf;

  double tau_start = 0.5e-6;
  double tau_stop = 4e-6;
  double tau_step = 20e-9;

  double dt = 1e-9;
  double tol = 1e-8;
  std::size_t max_cycles = 1000;

  std::uint64_t seed = 1;
  double contrast_sigma = 0.0;  // absolute Gaussian noise added to contrast

  double scan_pump_rate_min = 1.9e5;
  double scan_pump_rate_max = 1.9e8;
  std::size_t scan_points = 60;
  double laser_power = 0.15;    // W
  double beam_waist = 18e-6;    // m

  void validate() const;
  double effective_pump_rate() const;
  pulse::SequenceSettings sequence_settings() const;
  pulse::PulseSequence sequence() const;
  pulse::SteadyCycleOptions cycle_options() const;
  std::vector<double> taus() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Unknown sections or keys, duplicates and malformed values are rejected with
// "<source>:<line>: [section] key: ..." messages.
RunConfig parse_config(std::string_view text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);
// Every field written explicitly; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);

enum class ByteOrder { little, big };

// Text header terminated by "end\n", then nx*ny*ntau float32 values in
// ContrastStack order (x outermost, tau innermost):
//   NVSTACK1
//   nx <int>
//   ny <int>
//   ntau <int>
//   um_per_pixel <real>
//   tau_start <real>
//   tau_step <real>
//   byte_order little|big
//   end
void write_stack(std::ostream& out, const analysis::ContrastStack& stack,
                 ByteOrder order = ByteOrder::little);
analysis::ContrastStack read_stack(std::istream& in);
void write_stack_file(const std::filesystem::path& path, const analysis::ContrastStack& stack,
                      ByteOrder order = ByteOrder::little);
analysis::ContrastStack read_stack_file(const std::filesystem::path& path);

// Header row, comma separated, '.' decimal point, LF line endings. Numbers are
// written in shortest round-trip form.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  // Throws InputError if the column is absent.
  std::vector<double> column(std::string_view name) const;
};

std::string format_number(double value);
void write_csv(std::ostream& out, const CsvTable& table);
CsvTable read_csv(std::istream& in, const std::string& source = "csv");
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv_file(const std::filesystem::path& path);

CsvTable curve_table(const pulse::RabiCurve& curve);
CsvTable trace_table(const model::Trace& trace);
CsvTable profile_table(const analysis::FieldProfile& profile);
CsvTable saturation_table(std::span<const analysis::SaturationPoint> scan);

}  // namespace nvrabi::io
