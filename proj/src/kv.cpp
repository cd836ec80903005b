#include "seesaw/kv.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>

#include "seesaw/tensor.hpp"

namespace seesaw::kv {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void for_each(std::string_view text,
              const std::function<void(std::string_view, std::string_view, std::size_t)>& fn) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw UsageError("config line " + std::to_string(line_no) + ": expected key = value, got '" +
                             std::string(line) + "'");
        fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
    }
}

namespace {

template <typename T>
T parse_integral(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty() || value.front() == '-')
        throw UsageError("config key '" + std::string(key) + "': expected a non-negative integer, got '" +
                         std::string(value) + "'");
    return out;
}

}  // namespace

std::size_t parse_size(std::string_view key, std::string_view value) {
    return parse_integral<std::size_t>(key, value);
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
    return parse_integral<std::uint64_t>(key, value);
}

double parse_double(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end || value.empty() || !std::isfinite(out))
        throw UsageError("config key '" + std::string(key) + "': expected a number, got '" + std::string(value) +
                         "'");
    return out;
}

std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace seesaw::kv
