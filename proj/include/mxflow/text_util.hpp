#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace mxflow {

// Shortest round-trippable decimal form, locale independent.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);

}  // namespace mxflow
