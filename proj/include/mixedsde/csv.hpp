#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mixedsde {

/// Shortest decimal representation that round-trips a double exactly
/// (printf "%.17g"); used for every number written to CSV.
std::string format_g17(double x);

/// Strict double parse of a whole token; throws DataError otherwise.
double parse_double(std::string_view token, const std::string& what);

/// Strict non-negative integer parse; throws DataError otherwise.
long long parse_int(std::string_view token, const std::string& what);

/// Splits a CSV line on commas. No quoting: none of our formats needs it.
std::vector<std::string> split_csv_line(const std::string& line);

/// Reads a whole text file; throws DataError if it cannot be opened.
std::string read_text_file(const std::string& path);

/// Writes text to a file atomically-ish (truncate + flush); throws DataError on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace mixedsde
