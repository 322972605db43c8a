#include "dqagt/csv.h"

#include <charconv>
#include <cmath>

#include "dqagt/errors.h"

namespace dqagt {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || res.ec != std::errc() ||
      res.ptr != token.data() + token.size()) {
    throw ConfigError("not a number: '" + std::string(token) + "'");
  }
  return v;
}

long long parse_int(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  long long v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || res.ec != std::errc() ||
      res.ptr != token.data() + token.size()) {
    throw ConfigError("not an integer: '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace dqagt
