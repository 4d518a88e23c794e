#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "kexfam/errors.hpp"

namespace kexfam {

// Shortest decimal form that round-trips to the same double.
inline std::string double_to_string(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const char* what) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw input_error(std::string(what) + ": cannot parse number '" +
                      std::string(text) + "'");
  return v;
}

}  // namespace kexfam
