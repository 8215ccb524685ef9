#pragma once

// Number/CSV helpers shared by the serialization code. Doubles are printed
// with std::to_chars shortest form, which round-trips exactly and does not
// depend on locale, so identical runs produce identical bytes.

#include <charconv>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace spde::detail {

inline std::string fmt(double x) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

inline std::string fmt(long long x) { return std::to_string(x); }
inline std::string fmt(int x) { return std::to_string(x); }

inline double parse_double(std::string_view s, std::string_view what) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return out;
}

inline long long parse_int(std::string_view s, std::string_view what) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  return out;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace spde::detail
