#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace xmaml::csv {

/// Splits on commas. No quoting: every format in this project keeps fields
/// identifier-safe.
std::vector<std::string> split(std::string_view line);

/// Lines of a UTF-8 text file with trailing '\r' removed. Throws IoError
/// naming the path when it cannot be opened.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Strict decimal parse of the whole field; false on any trailing garbage.
bool parse_double(std::string_view field, double& out);
bool parse_int(std::string_view field, long long& out);

/// Shortest text that parses back to exactly `value`.
std::string format_double(double value);

std::string join(const std::vector<std::string>& fields, char sep = ',');

/// Writes `text` to `path`, creating parent directories. Throws IoError.
void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace xmaml::csv
