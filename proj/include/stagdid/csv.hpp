#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stagdid/panel.hpp"

namespace stagdid {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const;  // -1 when absent
};

// RFC-4180-style reader: quoted fields, doubled-quote escapes, CRLF or LF.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text);

// Column mapping from a CSV header onto the panel contract. `cohort` uses the
// literal token "never" for never-treated units, otherwise the first treated
// period's label.
struct PanelColumns {
  std::string unit = "unit";
  std::string period = "period";
  std::string outcome = "outcome";
  std::string cohort = "cohort";
  std::vector<std::string> covariates;
};

std::vector<RawRow> rows_from_csv(const CsvTable& table, const PanelColumns& columns);

// Writes the canonical panel back out; cohorts are emitted as original period
// labels (or "never") so the file round-trips through validate_panel.
void write_panel_csv(const std::filesystem::path& path, const PanelDataset& panel);

// Shortest round-trip decimal representation; NaN becomes the empty string.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

// FNV-1a over the raw file bytes, as a 16-digit lowercase hex string.
std::string fnv1a64_hex(const std::filesystem::path& path);

}  // namespace stagdid
