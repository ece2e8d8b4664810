#include "stagdid/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace stagdid {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::CsvParse, "cannot parse " + what + " value '" + raw + "' as an integer");
  return v;
}

double parse_num(const std::string& raw, const std::string& what) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN")
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorCode::CsvParse, "cannot parse " + what + " value '" + raw + "' as a number");
  return v;
}

}  // namespace

int CsvTable::column(std::string_view name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;

  auto end_field = [&]() {
    fields.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    if (!row_started && fields.empty()) return;
    end_field();
    if (table.header.empty())
      table.header = std::move(fields);
    else
      table.rows.push_back(std::move(fields));
    fields = {};
    row_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; row_started = true; break;
      case ',': end_field(); row_started = true; break;
      case '\r': break;
      case '\n': end_row(); break;
      default: field.push_back(c); row_started = true;
    }
  }
  if (in_quotes) fail(ErrorCode::CsvParse, "unterminated quoted field");
  if (row_started || !field.empty() || !fields.empty()) end_row();

  if (table.header.empty()) fail(ErrorCode::CsvParse, "file has no header row");
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    if (table.rows[r].size() != table.header.size())
      fail(ErrorCode::CsvParse, "row " + std::to_string(r + 2) + " has " + std::to_string(table.rows[r].size()) +
                                    " fields, header has " + std::to_string(table.header.size()));
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path)); }

std::vector<RawRow> rows_from_csv(const CsvTable& table, const PanelColumns& columns) {
  auto need = [&](const std::string& name) {
    const int j = table.column(name);
    if (j < 0) fail(ErrorCode::ConfigUnknownColumn, "column '" + name + "' is not in the CSV header");
    return j;
  };
  const int j_unit = need(columns.unit);
  const int j_period = need(columns.period);
  const int j_outcome = need(columns.outcome);
  const int j_cohort = need(columns.cohort);
  std::vector<int> j_cov;
  for (const auto& name : columns.covariates) j_cov.push_back(need(name));

  std::vector<RawRow> rows;
  rows.reserve(table.rows.size());
  for (const auto& fields : table.rows) {
    RawRow r;
    r.unit = trim(fields[static_cast<std::size_t>(j_unit)]);
    r.period = parse_int(fields[static_cast<std::size_t>(j_period)], "period");
    r.outcome = parse_num(fields[static_cast<std::size_t>(j_outcome)], "outcome");
    const std::string cohort = trim(fields[static_cast<std::size_t>(j_cohort)]);
    if (cohort != "never") r.cohort = parse_int(cohort, "cohort");
    for (std::size_t k = 0; k < j_cov.size(); ++k)
      r.covariates.push_back(parse_num(fields[static_cast<std::size_t>(j_cov[k])], "covariate " + columns.covariates[k]));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_panel_csv(const std::filesystem::path& path, const PanelDataset& panel) {
  std::string out = "unit,period,outcome,cohort";
  for (const auto& name : panel.covariate_names()) out += "," + name;
  out += "\n";
  for (int i = 0; i < panel.n_units(); ++i) {
    const int g = panel.cohort(i);
    const std::string cohort = g == kNever ? "never" : std::to_string(panel.period_label(g));
    for (int t = 1; t <= panel.n_periods(); ++t) {
      out += panel.unit_id(i);
      out += ",";
      out += std::to_string(panel.period_label(t));
      out += ",";
      out += format_double(panel.outcome(i, t));
      out += ",";
      out += cohort;
      for (int k = 0; k < panel.n_covariates(); ++k) {
        out += ",";
        out += format_double(panel.covariate(i, t, k));
      }
      out += "\n";
    }
  }
  write_file(path, out);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "";
  return std::string(buf, p);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::IoError, "error while reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) fail(ErrorCode::IoError, "error while writing '" + path.string() + "'");
}

std::string fnv1a64_hex(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001B3ull;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xF];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace stagdid
