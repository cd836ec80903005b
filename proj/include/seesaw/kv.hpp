#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace seesaw::kv {

/// Calls `fn(key, value, line_number)` for each `key = value` line. Blank
/// lines and lines starting with '#' are skipped. Throws UsageError on a
/// line without '='.
void for_each(std::string_view text, const std::function<void(std::string_view, std::string_view, std::size_t)>& fn);

std::string_view trim(std::string_view s);

std::size_t parse_size(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace seesaw::kv
