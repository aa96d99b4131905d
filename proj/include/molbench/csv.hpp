// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace molbench::csv {

/// Splits one line, honoring double-quoted fields with "" escapes.
std::vector<std::string> split_line(std::string_view line);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
};

/// Reads a header + rows file. Every row must have header.size() cells;
/// violations throw DataError naming the line.
Table read(const std::filesystem::path& path);
Table parse(std::string_view text, std::string_view source = "<memory>");

/// Shortest round-trip decimal form.
std::string format_double(double value);
/// Strict full-field parse; throws DataError with context on failure.
double parse_double(std::string_view text, std::string_view context);

std::string escape(std::string_view field);

}  // namespace molbench::csv
