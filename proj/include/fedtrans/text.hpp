#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedtrans::text {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

/// Parses the whole of `field` as a double; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_integer(std::string_view field);

/// Splits one CSV line. Double-quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

/// Reads a file line by line with trailing '\r' stripped.
std::vector<std::string> read_lines(const std::string& path);

}  // namespace fedtrans::text
