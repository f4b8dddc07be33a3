#include "ardm/report.hpp"

#include <cmath>

#include <json.hpp>

#include "ardm/error.hpp"
#include "ardm/io.hpp"

namespace ardm {

namespace {

std::string csv_field(const Cell& cell) {
  if (const auto* s = std::get_if<std::string>(&cell)) {
    if (s->find_first_of(",\"\n") == std::string::npos) return *s;
    std::string quoted = "\"";
    for (char c : *s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  if (const auto* d = std::get_if<double>(&cell)) return std::isnan(*d) ? "nan" : io::format_real(*d);
  return std::to_string(std::get<std::int64_t>(cell));
}

}  // namespace

void Table::add(std::vector<Cell> row) {
  if (row.size() != columns.size()) throw ShapeError("report row has the wrong number of fields");
  rows.push_back(std::move(row));
}

std::string render_csv(const Table& table, const std::string& config_digest) {
  std::string out = std::string("# ardm ") + kToolkitVersion + " config_digest=" + config_digest + "\n";
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_field(row[i]);
    out += '\n';
  }
  return out;
}

std::string render_jsonl(const Table& table) {
  std::string out;
  for (const auto& row : table.rows) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < row.size(); ++i) {
      const Cell& cell = row[i];
      if (const auto* s = std::get_if<std::string>(&cell)) {
        obj[table.columns[i]] = *s;
      } else if (const auto* d = std::get_if<double>(&cell)) {
        if (std::isfinite(*d)) {
          obj[table.columns[i]] = *d;
        } else {
          obj[table.columns[i]] = nullptr;
        }
      } else {
        obj[table.columns[i]] = std::get<std::int64_t>(cell);
      }
    }
    out += obj.dump() + "\n";
  }
  return out;
}

void write_table(const std::filesystem::path& stem, const Table& table, const std::string& config_digest) {
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path jsonl = stem;
  jsonl += ".jsonl";
  io::write_text_atomic(csv, render_csv(table, config_digest));
  io::write_text_atomic(jsonl, render_jsonl(table));
}

}  // namespace ardm
