#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "nvrabi/io.hpp"

namespace nvrabi::io {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Strips a trailing comment introduced by '#' or ';'.
std::string_view strip_comment(std::string_view s) {
  const auto pos = s.find_first_of("#;");
  return pos == std::string_view::npos ? s : s.substr(0, pos);
}

std::optional<double> parse_real(std::string_view text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::optional<std::uint64_t> parse_unsigned(std::string_view text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

// A key binds a field to its text form in both directions.
struct Key {
  std::function<bool(RunConfig&, std::string_view)> set;  // false: bad value
  std::function<std::optional<std::string>(const RunConfig&)> get;
  const char* expects;
};

Key real_key(double RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) {
            const auto x = parse_real(v);
            if (!x) return false;
            c.*member = *x;
            return true;
          },
          [member](const RunConfig& c) -> std::optional<std::string> { return format_number(c.*member); },
          "a real number"};
}

template <class Sub>
Key nested_key(Sub RunConfig::*group, double Sub::*member) {
  return {[group, member](RunConfig& c, std::string_view v) {
            const auto x = parse_real(v);
            if (!x) return false;
            (c.*group).*member = *x;
            return true;
          },
          [group, member](const RunConfig& c) -> std::optional<std::string> {
            return format_number((c.*group).*member);
          },
          "a real number"};
}

Key optional_key(std::optional<double> RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) {
            const auto x = parse_real(v);
            if (!x) return false;
            c.*member = *x;
            return true;
          },
          [member](const RunConfig& c) -> std::optional<std::string> {
            if (!(c.*member)) return std::nullopt;
            return format_number(*(c.*member));
          },
          "a real number"};
}

template <class T>
Key count_key(T RunConfig::*member) {
  return {[member](RunConfig& c, std::string_view v) {
            const auto x = parse_unsigned(v);
            if (!x) return false;
            c.*member = static_cast<T>(*x);
            return true;
          },
          [member](const RunConfig& c) -> std::optional<std::string> {
            return fmt::format("{}", c.*member);
          },
          "a non-negative integer"};
}

using KeyTable = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Key>>>>;

const KeyTable& keys() {
  using R = model::TransitionRates;
  using P = model::PhysicalConstants;
  static const KeyTable table = {
      {"rates",
       {{"k41", nested_key(&RunConfig::rates, &R::k41)},
        {"k52", nested_key(&RunConfig::rates, &R::k52)},
        {"k63", nested_key(&RunConfig::rates, &R::k63)},
        {"k47", nested_key(&RunConfig::rates, &R::k47)},
        {"k57", nested_key(&RunConfig::rates, &R::k57)},
        {"k67", nested_key(&RunConfig::rates, &R::k67)},
        {"k71", nested_key(&RunConfig::rates, &R::k71)},
        {"k72", nested_key(&RunConfig::rates, &R::k72)},
        {"k73", nested_key(&RunConfig::rates, &R::k73)}}},
      {"constants",
       {{"gamma_c_inf", nested_key(&RunConfig::constants, &P::gamma_c_inf)},
        {"gyromagnetic_hz_per_mt", nested_key(&RunConfig::constants, &P::gyromagnetic_hz_per_mt)},
        {"cross_section", nested_key(&RunConfig::constants, &P::cross_section)},
        {"wavelength", nested_key(&RunConfig::constants, &P::wavelength)},
        {"planck_h", nested_key(&RunConfig::constants, &P::planck_h)},
        {"light_c", nested_key(&RunConfig::constants, &P::light_c)},
        {"gamma_2_dark", nested_key(&RunConfig::constants, &P::gamma_2_dark)},
        {"pump_rate_saturation", nested_key(&RunConfig::constants, &P::pump_rate_saturation)}}},
      {"sequence",
       {{"laser_duration", real_key(&RunConfig::laser_duration)},
        {"wait_duration", real_key(&RunConfig::wait_duration)},
        {"rf_duration", real_key(&RunConfig::rf_duration)}}},
      {"drive",
       {{"pump_rate", optional_key(&RunConfig::pump_rate)},
        {"saturation", optional_key(&RunConfig::saturation)},
        {"rabi_frequency", real_key(&RunConfig::rabi_frequency)},
        {"gamma2_laser", optional_key(&RunConfig::gamma2_laser)},
        {"gamma2_wait", optional_key(&RunConfig::gamma2_wait)},
        {"gamma2_rf", optional_key(&RunConfig::gamma2_rf)}}},
      {"sweep",
       {{"tau_start", real_key(&RunConfig::tau_start)},
        {"tau_stop", real_key(&RunConfig::tau_stop)},
        {"tau_step", real_key(&RunConfig::tau_step)}}},
      {"solver",
       {{"dt", real_key(&RunConfig::dt)},
        {"tol", real_key(&RunConfig::tol)},
        {"max_cycles", count_key(&RunConfig::max_cycles)}}},
      {"noise", {{"seed", count_key(&RunConfig::seed)}, {"contrast_sigma", real_key(&RunConfig::contrast_sigma)}}},
      {"saturation",
       {{"pump_rate_min", real_key(&RunConfig::scan_pump_rate_min)},
        {"pump_rate_max", real_key(&RunConfig::scan_pump_rate_max)},
        {"points", count_key(&RunConfig::scan_points)},
        {"laser_power", real_key(&RunConfig::laser_power)},
        {"beam_waist", real_key(&RunConfig::beam_waist)}}},
  };
  return table;
}

const Key* find_key(std::string_view section, std::string_view name) {
  for (const auto& [sec, entries] : keys()) {
    if (sec != section) continue;
    for (const auto& [key, binding] : entries) {
      if (key == name) return &binding;
    }
  }
  return nullptr;
}

bool known_section(std::string_view section) {
  for (const auto& entry : keys()) {
    if (entry.first == section) return true;
  }
  return false;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what, 0);
}

}  // namespace

void RunConfig::validate() const {
  rates.validate();
  require(pump_rate.has_value() != saturation.has_value(),
          "exactly one of [drive] pump_rate and [drive] saturation must be set");
  if (pump_rate) require(std::isfinite(*pump_rate) && *pump_rate >= 0.0, "[drive] pump_rate must be >= 0");
  if (saturation) require(std::isfinite(*saturation) && *saturation >= 0.0, "[drive] saturation must be >= 0");
  require(constants.pump_rate_saturation > 0.0, "[constants] pump_rate_saturation must be > 0");
  require(constants.gamma_c_inf >= 0.0, "[constants] gamma_c_inf must be >= 0");
  require(constants.gyromagnetic_hz_per_mt > 0.0, "[constants] gyromagnetic_hz_per_mt must be > 0");
  require(constants.cross_section > 0.0 && constants.wavelength > 0.0 && constants.planck_h > 0.0 &&
              constants.light_c > 0.0,
          "[constants] cross_section, wavelength, planck_h and light_c must be > 0");
  require(std::isfinite(laser_duration) && laser_duration >= 0.0, "[sequence] laser_duration must be >= 0");
  require(std::isfinite(wait_duration) && wait_duration >= 0.0, "[sequence] wait_duration must be >= 0");
  require(std::isfinite(rf_duration) && rf_duration >= 0.0, "[sequence] rf_duration must be >= 0");
  require(std::isfinite(rabi_frequency) && rabi_frequency >= 0.0, "[drive] rabi_frequency must be >= 0");
  require(tau_start >= 0.0 && tau_start < tau_stop, "[sweep] tau_start must be >= 0 and < tau_stop");
  require(tau_step > 0.0 && std::isfinite(tau_stop), "[sweep] tau_step must be > 0");
  require(dt > 0.0 && std::isfinite(dt), "[solver] dt must be > 0");
  require(tol > 0.0, "[solver] tol must be > 0");
  require(max_cycles >= 1, "[solver] max_cycles must be >= 1");
  require(contrast_sigma >= 0.0 && std::isfinite(contrast_sigma), "[noise] contrast_sigma must be >= 0");
  require(scan_pump_rate_min > 0.0 && scan_pump_rate_min < scan_pump_rate_max,
          "[saturation] need 0 < pump_rate_min < pump_rate_max");
  require(scan_points >= 4, "[saturation] points must be >= 4");
  require(laser_power >= 0.0 && beam_waist > 0.0, "[saturation] laser_power must be >= 0 and beam_waist > 0");
}

double RunConfig::effective_pump_rate() const {
  if (pump_rate) return *pump_rate;
  if (saturation) return *saturation * constants.pump_rate_saturation;
  throw ConfigError("neither [drive] pump_rate nor [drive] saturation is set", 0);
}

pulse::SequenceSettings RunConfig::sequence_settings() const {
  pulse::SequenceSettings s;
  s.laser_duration = laser_duration;
  s.wait_duration = wait_duration;
  s.rf_duration = rf_duration;
  s.pump_rate = effective_pump_rate();
  s.rabi_frequency = rabi_frequency;
  s.laser_decoherence = gamma2_laser;
  s.wait_decoherence = gamma2_wait;
  s.rf_decoherence = gamma2_rf;
  s.rates = rates;
  s.constants = constants;
  return s;
}

pulse::PulseSequence RunConfig::sequence() const {
  validate();
  return pulse::build_sequence(sequence_settings());
}

pulse::SteadyCycleOptions RunConfig::cycle_options() const {
  pulse::SteadyCycleOptions o;
  o.dt = dt;
  o.tol = tol;
  o.max_cycles = max_cycles;
  return o;
}

std::vector<double> RunConfig::taus() const { return pulse::tau_grid(tau_start, tau_stop, tau_step); }

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig config;
  bool pump_rate_seen = false;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line
  std::string section;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& what) -> void {
    throw ConfigError(fmt::format("{}:{}: {}", source, line_no, what), line_no);
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!known_section(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const std::string name(trim(line.substr(0, eq)));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + name + "' appears before any [section]");
    const std::string field = "[" + section + "] " + name;
    const Key* key = find_key(section, name);
    if (!key) fail(field + ": unknown key");
    const auto [it, fresh] = seen.emplace(section + "." + name, line_no);
    if (!fresh) fail(fmt::format("{}: duplicate key (first set on line {})", field, it->second));
    if (value.empty()) fail(field + ": missing value");
    if (!key->set(config, value)) {
      fail(fmt::format("{}: expected {}, got '{}'", field, key->expects, value));
    }
    if (section == "drive" && name == "pump_rate") pump_rate_seen = true;
  }

  const auto sat = seen.find("drive.saturation");
  if (pump_rate_seen && sat != seen.end()) {
    line_no = sat->second;
    fail(fmt::format("[drive] pump_rate (line {}) and [drive] saturation (line {}) are mutually exclusive",
                     seen.at("drive.pump_rate"), sat->second));
  }
  // The default pump rate gives way to an explicit saturation parameter.
  if (sat != seen.end()) config.pump_rate.reset();

  try {
    config.validate();
  } catch (const InputError& e) {
    throw ConfigError(source + ": " + e.what(), 0);
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [section, entries] : keys()) {
    if (!out.empty()) out += '\n';
    out += "[" + section + "]\n";
    for (const auto& [name, key] : entries) {
      if (const auto v = key.get(config)) out += name + " = " + *v + "\n";
    }
  }
  return out;
}

}  // namespace nvrabi::io
