// Copyright (c) mpcc_opt contributors
#pragma once

#include <charconv>
#include <string>

namespace mpcc {

/// Shortest decimal representation that parses back to the same double;
/// keeps repeated runs byte-identical.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace mpcc
