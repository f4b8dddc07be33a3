#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace ardm {

inline constexpr const char* kToolkitVersion = "0.1.0";

using Cell = std::variant<std::string, double, std::int64_t>;

/// A report table written as CSV and mirrored as JSON lines.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row);
};

/// "# ardm <version> config_digest=<digest>" followed by the header row and data rows.
std::string render_csv(const Table& table, const std::string& config_digest);
/// One JSON object per row with the column names as keys.
std::string render_jsonl(const Table& table);

/// Writes <stem>.csv and <stem>.jsonl atomically.
void write_table(const std::filesystem::path& stem, const Table& table, const std::string& config_digest);

}  // namespace ardm
