#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>

#include "nvrabi/io.hpp"

namespace nvrabi::io {

namespace {

constexpr std::string_view kMagic = "NVSTACK1\n";
constexpr std::size_t kMaxHeaderLines = 64;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

std::uint32_t swap_bytes(std::uint32_t v) {
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

bool host_matches(ByteOrder order) {
  return (order == ByteOrder::little) == (std::endian::native == std::endian::little);
}

// A step whose grid start + i * step reproduces every tau exactly, if one
// lies within a few ulps of the mean spacing; otherwise the mean spacing.
double grid_step(const std::vector<double>& tau) {
  if (tau.size() < 2) return 1.0;
  const double n = static_cast<double>(tau.size() - 1);
  const double mean = (tau.back() - tau.front()) / n;
  auto exact = [&](double step) {
    for (std::size_t i = 0; i < tau.size(); ++i) {
      if (tau.front() + static_cast<double>(i) * step != tau[i]) return false;
    }
    return true;
  };
  double lo = mean, hi = mean;
  for (int k = 0; k < 8; ++k) {
    if (exact(lo)) return lo;
    if (exact(hi)) return hi;
    lo = std::nextafter(lo, 0.0);
    hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
  }
  for (std::size_t i = 1; i < tau.size(); ++i) {
    const double expected = tau.front() + static_cast<double>(i) * mean;
    if (std::abs(tau[i] - expected) > 1e-9 * mean) {
      throw InputError(fmt::format("stack file: tau grid is not uniform at index {}", i));
    }
  }
  return mean;
}

std::string read_line(std::istream& in, std::size_t line_no) {
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(fmt::format("stack file: header ended early at line {} (missing 'end')", line_no));
  }
  return line;
}

template <class T>
T parse_field(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InputError(fmt::format("stack file: bad value '{}' for header field '{}'", text, key));
  }
  return v;
}

}  // namespace

void write_stack(std::ostream& out, const analysis::ContrastStack& stack, ByteOrder order) {
  if (stack.nx == 0 || stack.ny == 0 || stack.tau.empty()) {
    throw InputError("stack file: empty stack (nx, ny and ntau must be positive)");
  }
  stack.validate();
  const double step = grid_step(stack.tau);

  std::string header(kMagic);
  header += fmt::format("nx {}\nny {}\nntau {}\n", stack.nx, stack.ny, stack.ntau());
  header += fmt::format("um_per_pixel {}\n", format_number(stack.um_per_pixel));
  header += fmt::format("tau_start {}\ntau_step {}\n", format_number(stack.tau.front()), format_number(step));
  header += fmt::format("byte_order {}\nend\n", order == ByteOrder::little ? "little" : "big");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  std::vector<std::uint32_t> words(stack.contrast.size());
  std::memcpy(words.data(), stack.contrast.data(), words.size() * 4);
  if (!host_matches(order)) {
    for (auto& w : words) w = swap_bytes(w);
  }
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!out) throw InputError("stack file: write failed");
}

analysis::ContrastStack read_stack(std::istream& in) {
  char magic[kMagic.size()];
  in.read(magic, static_cast<std::streamsize>(kMagic.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (i >= got || magic[i] != kMagic[i]) {
      throw InputError(fmt::format("stack file: bad magic at byte offset {} (expected \"NVSTACK1\")", i));
    }
  }

  std::map<std::string, std::string> fields;
  std::size_t line_no = 1;
  for (;;) {
    if (++line_no > kMaxHeaderLines) throw InputError("stack file: header has no 'end' line");
    const std::string line = read_line(in, line_no);
    if (line == "end") break;
    const auto space = line.find(' ');
    if (space == std::string::npos) {
      throw InputError(fmt::format("stack file: malformed header line {}: '{}'", line_no, line));
    }
    const std::string key = line.substr(0, space);
    if (!fields.emplace(key, line.substr(space + 1)).second) {
      throw InputError(fmt::format("stack file: duplicate header field '{}'", key));
    }
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw InputError("stack file: missing header field '" + key + "'");
    return it->second;
  };
  for (const auto& [key, value] : fields) {
    static const std::array<std::string_view, 7> known{"nx",        "ny",       "ntau",      "um_per_pixel",
                                                       "tau_start", "tau_step", "byte_order"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InputError("stack file: unknown header field '" + key + "'");
    }
  }

  analysis::ContrastStack stack;
  stack.nx = parse_field<std::size_t>("nx", field("nx"));
  stack.ny = parse_field<std::size_t>("ny", field("ny"));
  const auto ntau = parse_field<std::size_t>("ntau", field("ntau"));
  stack.um_per_pixel = parse_field<double>("um_per_pixel", field("um_per_pixel"));
  const double tau_start = parse_field<double>("tau_start", field("tau_start"));
  const double tau_step = parse_field<double>("tau_step", field("tau_step"));
  const std::string& order_text = field("byte_order");
  if (order_text != "little" && order_text != "big") {
    throw InputError("stack file: byte_order must be 'little' or 'big', got '" + order_text + "'");
  }
  const ByteOrder order = order_text == "little" ? ByteOrder::little : ByteOrder::big;
  if (stack.nx == 0 || stack.ny == 0 || ntau == 0) {
    throw InputError("stack file: empty stack (nx, ny and ntau must be positive)");
  }
  if (!(stack.um_per_pixel > 0.0) || !std::isfinite(stack.um_per_pixel)) {
    throw InputError("stack file: um_per_pixel must be > 0");
  }
  if (!(tau_step > 0.0) || !std::isfinite(tau_step) || !std::isfinite(tau_start)) {
    throw InputError("stack file: tau_step must be > 0");
  }
  const std::size_t limit = std::numeric_limits<std::size_t>::max() / 4;
  if (stack.nx > limit / stack.ny || stack.nx * stack.ny > limit / ntau) {
    throw InputError("stack file: dimensions overflow");
  }
  const std::size_t count = stack.nx * stack.ny * ntau;

  stack.tau.resize(ntau);
  for (std::size_t i = 0; i < ntau; ++i) stack.tau[i] = tau_start + static_cast<double>(i) * tau_step;

  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() != 4 * count) {
    throw InputError(fmt::format("stack file: payload length mismatch (expected {} bytes, found {})",
                                 4 * count, payload.size()));
  }
  std::vector<std::uint32_t> words(count);
  std::memcpy(words.data(), payload.data(), payload.size());
  if (!host_matches(order)) {
    for (auto& w : words) w = swap_bytes(w);
  }
  stack.contrast.resize(count);
  std::memcpy(stack.contrast.data(), words.data(), payload.size());
  return stack;
}

void write_stack_file(const std::filesystem::path& path, const analysis::ContrastStack& stack, ByteOrder order) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_stack(out, stack, order);
}

analysis::ContrastStack read_stack_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open stack file " + path.string());
  return read_stack(in);
}

}  // namespace nvrabi::io
