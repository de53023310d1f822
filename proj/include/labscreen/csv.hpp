#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace labscreen::csv {

/// Comma-delimited table. Fields are unquoted; lines starting with '#' are
/// comments and are skipped on read.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`; throws Parse if absent.
  std::size_t column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);

Table parse(std::string_view text, std::string_view source = "<memory>");
Table read_file(const std::filesystem::path& path);

/// Throws Parse unless the header matches `expected` exactly.
void require_header(const Table& table, const std::vector<std::string>& expected,
                    std::string_view source);

double to_double(std::string_view field, std::string_view context);
long to_long(std::string_view field, std::string_view context);

std::string join(const std::vector<std::string>& fields);

void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace labscreen::csv
