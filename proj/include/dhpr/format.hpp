#pragma once

#include <cstdio>
#include <string>

namespace dhpr {

/// Doubles printed as %.17g round-trip exactly through strtod.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace dhpr
