#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sizeloop {

/// Parse errors carry a human-readable position where one is known.
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(a[i])) !=
            std::toupper(static_cast<unsigned char>(b[i]))) return false;
    }
    return true;
}

inline std::optional<double> suffix_scale(std::string_view s) {
    if (s.empty()) return 1.0;
    if (iequals(s, "meg")) return 1e6;
    if (s.size() != 1) return std::nullopt;
    switch (std::toupper(static_cast<unsigned char>(s[0]))) {
        case 'F': return 1e-15;
        case 'P': return 1e-12;
        case 'N': return 1e-9;
        case 'U': return 1e-6;
        case 'M': return 1e-3;
        case 'K': return 1e3;
        case 'G': return 1e9;
        default: return std::nullopt;
    }
}

} // namespace detail

/// Parse a numeric literal with an optional SPICE unit suffix
/// (f, p, n, u, m, k, meg, g — case-insensitive). "1.5p" -> 1.5e-12.
/// Plain exponent forms ("1e-12", "-0.9") are accepted as-is.
inline std::optional<double> try_parse_value(std::string_view text) {
    if (text.empty()) return std::nullopt;
    double mantissa = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, mantissa);
    if (ec != std::errc() || ptr == first) return std::nullopt;
    auto scale = detail::suffix_scale(std::string_view(ptr, static_cast<std::size_t>(last - ptr)));
    if (!scale) return std::nullopt;
    double v = mantissa * *scale;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

inline double parse_value(std::string_view text) {
    auto v = try_parse_value(text);
    if (!v) throw ValueError("malformed numeric value '" + std::string(text) + "'");
    return *v;
}

/// Shortest decimal form that round-trips the exact double.
inline std::string format_exact(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

/// Fixed-point helper for report columns.
inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::string(buf);
}

/// Engineering-style display with an SI suffix, for logs and reports.
inline std::string format_si(double v, const char* unit = "") {
    struct Step { double scale; const char* prefix; };
    static constexpr Step steps[] = {
        {1e9, "G"}, {1e6, "M"}, {1e3, "k"}, {1.0, ""},
        {1e-3, "m"}, {1e-6, "u"}, {1e-9, "n"}, {1e-12, "p"}, {1e-15, "f"},
    };
    if (v == 0.0) return std::string("0") + unit;
    double mag = std::fabs(v);
    for (const auto& s : steps) {
        if (mag >= s.scale * 0.9995) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.4g%s%s", v / s.scale, s.prefix, unit);
            return std::string(buf);
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g%s", v, unit);
    return std::string(buf);
}

} // namespace sizeloop
