// Small string helpers shared by the parsers and writers.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotfuse {

// Thrown for any malformed external input (run files, keys, tables, XML).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

bool is_ascii_space(char c);

std::string_view trim(std::string_view s);

// Splits on a single delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, char delim);

std::string to_lower_ascii(std::string_view s);

// Full-string numeric parses; nullopt when the text has trailing junk.
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int64(std::string_view s);

// Fixed-point formatting, e.g. format_fixed(0.5, 6) == "0.500000".
std::string format_fixed(double value, int decimals);

// Shortest round-trippable representation of a double.
std::string format_exact(double value);

}  // namespace slotfuse
