#include "cdqr/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cdqr::csv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find(',', start);
    std::string field = (pos == std::string::npos) ? line.substr(start)
                                                   : line.substr(start, pos - start);
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ' || field.back() == '\t'))
      field.pop_back();
    size_t lead = 0;
    while (lead < field.size() && (field[lead] == ' ' || field[lead] == '\t')) ++lead;
    out.push_back(field.substr(lead));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

int Table::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return int(i);
  return -1;
}

int Table::require_column(const std::string& name) const {
  int c = column(name);
  if (c < 0) throw std::runtime_error("missing required column '" + name + "'");
  return c;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  Table table;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      table.header = split_line(line);
      if (table.header.empty() || (table.header.size() == 1 && table.header[0].empty()))
        throw std::runtime_error(path + " line 1: empty header row");
      continue;
    }
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != table.header.size())
      throw std::runtime_error(path + " line " + std::to_string(line_no) + ": expected " +
                               std::to_string(table.header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_file(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (size_t i = 0; i < table.header.size(); ++i)
    out << table.header[i] << (i + 1 < table.header.size() ? "," : "\n");
  for (const auto& row : table.rows)
    for (size_t i = 0; i < row.size(); ++i) out << row[i] << (i + 1 < row.size() ? "," : "\n");
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double parse_double(const std::string& field, const std::string& path, size_t line) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw std::runtime_error(path + " line " + std::to_string(line) + ": invalid number '" +
                             field + "'");
  return value;
}

}  // namespace cdqr::csv
