#pragma once

#include <cmath>

#include "circscope/common.hpp"

namespace circscope {

// Tanh-approximate GELU (GPT-2 convention). Kept as free functions so both
// the tape op and its derivative check use the same kernel.
template <typename Scalar>
Scalar gelu_tanh(Scalar x) {
  const Scalar k = Scalar(0.7978845608028654);  // sqrt(2/pi)
  const Scalar c = Scalar(0.044715);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(k * (x + c * x * x * x)));
}

template <typename Scalar>
Scalar gelu_tanh_grad(Scalar x) {
  const Scalar k = Scalar(0.7978845608028654);
  const Scalar c = Scalar(0.044715);
  const Scalar t = std::tanh(k * (x + c * x * x * x));
  const Scalar dt = (Scalar(1) - t * t) * k * (Scalar(1) + Scalar(3) * c * x * x);
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * dt;
}

template <typename Scalar>
Mat<Scalar> gelu_tanh(const Mat<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return gelu_tanh(v); });
}

// Row-wise softmax, numerically stabilised, sums accumulated in double.
template <typename Scalar>
Mat<Scalar> softmax_rows(const Mat<Scalar>& x) {
  Mat<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    double denom = 0;
    for (Index j = 0; j < x.cols(); ++j) {
      const Scalar e = std::exp(x(i, j) - m);
      out(i, j) = e;
      denom += static_cast<double>(e);
    }
    out.row(i) *= Scalar(1.0 / denom);
  }
  return out;
}

// Softmax over attention scores with a causal mask: row i attends to
// columns 0..i only; masked entries come out exactly zero.
template <typename Scalar>
Mat<Scalar> causal_softmax(const Mat<Scalar>& scores) {
  Mat<Scalar> out = Mat<Scalar>::Zero(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    const Index n = i + 1;
    const Scalar m = scores.row(i).head(n).maxCoeff();
    double denom = 0;
    for (Index j = 0; j < n; ++j) {
      const Scalar e = std::exp(scores(i, j) - m);
      out(i, j) = e;
      denom += static_cast<double>(e);
    }
    out.row(i).head(n) *= Scalar(1.0 / denom);
  }
  return out;
}

// Softmax of one logit row in double precision, for metric references.
template <typename Derived>
Eigen::RowVectorXd softmax_row_f64(const Eigen::MatrixBase<Derived>& row) {
  Eigen::RowVectorXd v = row.template cast<double>();
  const double m = v.maxCoeff();
  v = (v.array() - m).exp();
  return v / v.sum();
}

}  // namespace circscope
