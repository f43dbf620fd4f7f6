#pragma once

#include <Eigen/Core>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace circscope {

using Index = Eigen::Index;

// Row-major throughout: activations are (position, feature) and the weight
// container stores row-major blobs, so maps and file IO stay copy-free.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using MatD = Mat<double>;

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

static_assert(std::endian::native == std::endian::little,
              "weight container IO assumes a little-endian host");

// Base error for everything raised by the library.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed inputs: bad files, shape mismatches, unknown hooks or edges.
class DataError : public Error {
  using Error::Error;
};

// Non-finite values or other numerical breakdowns; raised at op boundaries
// rather than propagated.
class NumericalError : public Error {
  using Error::Error;
};

// Raised when a run exceeds the configured forward-pass budget.
class PassBudgetError : public Error {
  using Error::Error;
};

}  // namespace circscope
