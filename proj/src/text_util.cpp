#include "mxflow/text_util.hpp"

#include <charconv>

namespace mxflow {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view text) {
    double out = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
    return out;
}

std::optional<long long> parse_int(std::string_view text) {
    long long out = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), out);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
    return out;
}

}  // namespace mxflow
