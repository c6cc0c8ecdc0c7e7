#pragma once

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mpar/error.hpp"

namespace mpar {

// Minimal CSV handling: comma-separated, no quoting or escaping. Identifiers
// in our formats must not contain commas.
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

inline std::optional<double> parse_double_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    raise(Err::MalformedRow, "bad numeric field '" + s + "'");
  return v;
}

inline std::optional<int64_t> parse_int_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    raise(Err::MalformedRow, "bad integer field '" + s + "'");
  return v;
}

// Shortest representation that round-trips a float (9 significant digits).
inline std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace mpar
