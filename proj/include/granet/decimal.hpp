#pragma once

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace granet {

/// Formats with 9 significant digits, the precision of every on-disk number.
inline std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Rounds to the nearest 9-significant-digit decimal, so a value that is about
/// to be serialized can be used in memory and still round-trip bit-exactly.
inline double snap9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::runtime_error(what + ": not a number: '" + s + "'");
  return v;
}

}  // namespace granet
