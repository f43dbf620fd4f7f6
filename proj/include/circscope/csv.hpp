#pragma once

#include <cstdio>
#include <string>

namespace circscope {

// Shortest decimal form that parses back to the same double, so CSVs are
// lossless and byte-stable across reruns.
inline std::string csv_double(double v) {
  if (v == 0) return "0";  // fold negative zero
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double parsed = 0;
    std::sscanf(buf, "%lf", &parsed);
    if (parsed == v) return buf;
  }
  return buf;
}

}  // namespace circscope
