#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "circscope/common.hpp"

namespace circscope {

// Shape-carrying dense tensor used at IO boundaries (weight container,
// caches). In-tape math runs on Eigen matrices; this type owns the flat
// row-major buffer and its shape metadata.
template <typename Scalar>
struct Tensor {
  std::vector<Index> shape;
  std::vector<Scalar> data;

  Tensor() = default;
  Tensor(std::vector<Index> s, std::vector<Scalar> d) : shape(std::move(s)), data(std::move(d)) {}

  Index size() const {
    Index n = 1;
    for (Index d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  void validate(const std::string& name) const {
    if (shape.empty()) throw DataError("tensor '" + name + "' has empty shape");
    for (Index d : shape) {
      if (d <= 0) throw DataError("tensor '" + name + "' has non-positive dimension");
    }
    if (size() != static_cast<Index>(data.size())) {
      throw DataError("tensor '" + name + "': shape/data size mismatch");
    }
    for (Scalar v : data) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericalError("tensor '" + name + "' contains non-finite values");
      }
    }
  }

  // Rank-1 tensors map to a single row; rank-2 to (rows, cols).
  Mat<Scalar> to_matrix() const {
    if (shape.size() == 1) {
      return Eigen::Map<const Mat<Scalar>>(data.data(), 1, shape[0]);
    }
    if (shape.size() == 2) {
      return Eigen::Map<const Mat<Scalar>>(data.data(), shape[0], shape[1]);
    }
    throw DataError("to_matrix supports rank-1 and rank-2 tensors only");
  }

  static Tensor from_matrix(const Mat<Scalar>& m, bool as_vector = false) {
    Tensor t;
    if (as_vector) {
      t.shape = {m.size()};
    } else {
      t.shape = {m.rows(), m.cols()};
    }
    t.data.assign(m.data(), m.data() + m.size());
    return t;
  }
};

using TensorF = Tensor<float>;

}  // namespace circscope
