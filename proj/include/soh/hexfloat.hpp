#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

#include "soh/error.hpp"

namespace soh {

/// Exact text encoding of a double, e.g. "0x1.8p+1", "-0x1p-3", "inf".
inline std::string to_hex(double v) {
  char buf[64];
  const bool neg = std::signbit(v);
  const double mag = neg ? -v : v;
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, mag, std::chars_format::hex);
  std::string digits(buf, end);
  std::string out = neg ? "-" : "";
  if (digits != "inf" && digits != "nan") out += "0x";
  return out + digits;
}

inline double from_hex(std::string_view s) {
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  if (s.starts_with("0x") || s.starts_with("0X")) s.remove_prefix(2);
  double v = 0.0;
  const auto fmt = (s == "inf" || s == "nan") ? std::chars_format::general : std::chars_format::hex;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, fmt);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(Errc::ParseError, "bad hexadecimal float '" + std::string(s) + "'");
  }
  return neg ? -v : v;
}

/// Shortest decimal text that round-trips to the same double.
inline std::string to_decimal(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace soh
