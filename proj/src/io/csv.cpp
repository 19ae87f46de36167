#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "nvrabi/io.hpp"

namespace nvrabi::io {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  // fmt's default presentation is the shortest form that reads back exactly.
  return fmt::format("{}", value);
}

std::vector<double> CsvTable::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw InputError(fmt::format("CSV has no column '{}'", name));
  const auto idx = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row.at(idx));
  return out;
}

void write_csv(std::ostream& out, const CsvTable& table) {
  std::string text;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    if (i) text += ',';
    text += table.columns[i];
  }
  text += '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw InputError("write_csv: row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ',';
      text += format_number(row[i]);
    }
    text += '\n';
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw InputError("write_csv: write failed");
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    const auto cells = split(view);
    if (header) {
      for (const auto cell : cells) table.columns.emplace_back(cell);
      header = false;
      continue;
    }
    if (cells.size() != table.columns.size()) {
      throw InputError(fmt::format("{}:{}: expected {} fields, found {}", source, line_no, table.columns.size(),
                                   cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::string_view cell = cells[i];
      if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
      const char* end = cell.data() + cell.size();
      const auto [ptr, ec] = std::from_chars(cell.data(), end, row[i]);
      if (cell.empty() || ec != std::errc() || ptr != end) {
        throw InputError(fmt::format("{}:{}: column '{}': not a number '{}'", source, line_no, table.columns[i],
                                     cells[i]));
      }
    }
    table.rows.push_back(std::move(row));
  }
  if (header) throw InputError(source + ": empty CSV (no header row)");
  return table;
}

void write_csv_file(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_csv(out, table);
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open CSV file " + path.string());
  return read_csv(in, path.string());
}

CsvTable curve_table(const pulse::RabiCurve& curve) {
  CsvTable t{{"tau_s", "contrast"}, {}};
  t.rows.reserve(curve.tau.size());
  for (std::size_t i = 0; i < curve.tau.size(); ++i) t.rows.push_back({curve.tau[i], curve.contrast[i]});
  return t;
}

CsvTable trace_table(const model::Trace& trace) {
  CsvTable t{{"t_s", "n1", "n2", "n3", "n4", "n5", "n6", "n7", "n_c", "n_E"}, {}};
  t.rows.reserve(trace.size());
  for (const auto& p : trace) {
    std::vector<double> row{p.time};
    row.insert(row.end(), p.state.values.begin(), p.state.values.end());
    row.push_back(model::excited_population(p.state));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable profile_table(const analysis::FieldProfile& profile) {
  CsvTable t{{"x_um", "nu_R_Hz", "B_R_mT"}, {}};
  for (std::size_t i = 0; i < profile.x_um.size(); ++i) {
    t.rows.push_back({profile.x_um[i], profile.nu_hz[i], profile.b_mt[i]});
  }
  return t;
}

CsvTable saturation_table(std::span<const analysis::SaturationPoint> scan) {
  CsvTable t{{"W_p_per_s", "n_E"}, {}};
  for (const auto& p : scan) t.rows.push_back({p.pump_rate, p.excited_population});
  return t;
}

}  // namespace nvrabi::io
