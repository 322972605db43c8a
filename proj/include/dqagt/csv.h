#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dqagt {

// Decimal text with 17 significant digits. Round-trips
// every double exactly and does not depend on the C locale.
std::string format_double(double v);

// Locale-free parse of a full token; throws ConfigError on trailing junk.
double parse_double(std::string_view token);
long long parse_int(std::string_view token);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

}  // namespace dqagt
