#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace polarbg::io {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Minimal CSV reader for the comma separated, unquoted formats used here.
class CsvReader {
 public:
  /// Throws ParseError unless the first line equals `expected_header`.
  CsvReader(std::string contents, std::string_view expected_header);

  /// Fills `fields` with the next row; returns false at end of input.
  bool next(std::vector<std::string_view>& fields);

  std::size_t line_number() const { return line_; }

 private:
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

double parse_double(std::string_view field, std::size_t line);
long long parse_int(std::string_view field, std::size_t line);

/// Worker count from POLARBG_THREADS (0 or unset = hardware concurrency).
unsigned thread_count();

/// Runs body(i) for i in [0, n). Each index must write only its own output slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace polarbg::io
