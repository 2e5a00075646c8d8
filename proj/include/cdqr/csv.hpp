#pragma once

#include <string>
#include <vector>

namespace cdqr::csv {

/// Comma-separated table with a required header row. UTF-8, '.' decimal,
/// no quoting (fields may not contain commas).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;          // -1 when absent
  int require_column(const std::string& name) const;  // throws when absent
};

Table read_file(const std::string& path);
void write_file(const std::string& path, const Table& table);

/// Deterministic shortest-ish formatting used for all numeric output.
std::string format_double(double v);

double parse_double(const std::string& field, const std::string& path, size_t line);

}  // namespace cdqr::csv
