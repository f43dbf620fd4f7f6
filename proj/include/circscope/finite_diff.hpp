#pragma once

#include <cmath>
#include <functional>

#include "circscope/common.hpp"

namespace circscope {

// Central finite difference of a scalar function along a direction:
//   (L(point + step * dir) - L(point - step * dir)) / (2 * step).
// The independent oracle for every gradient the tape produces.
template <typename Scalar>
double finite_difference(const std::function<double(const Mat<Scalar>&)>& metric,
                         const Mat<Scalar>& point, const Mat<Scalar>& direction, double step) {
  if (!(step > 0)) throw DataError("finite_difference: step must be positive");
  if (point.rows() != direction.rows() || point.cols() != direction.cols()) {
    throw DataError("finite_difference: point/direction shape mismatch");
  }
  const double up = metric(point + Scalar(step) * direction);
  const double down = metric(point - Scalar(step) * direction);
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw NumericalError("finite_difference: non-finite metric value");
  }
  return (up - down) / (2.0 * step);
}

// Guarded relative error for gradient checks: |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

}  // namespace circscope
