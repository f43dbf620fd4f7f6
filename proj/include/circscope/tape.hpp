#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "circscope/common.hpp"
#include "circscope/math.hpp"
#include "circscope/pass_counters.hpp"

namespace circscope {

// One weighted logit pick: metric += weight * x(row, col).
struct EntryWeight {
  Index row;
  Index col;
  double weight;
};

// Reverse-mode tape over dense row-major matrices. Values are computed
// eagerly as ops are recorded; backward() replays the recorded list once in
// reverse. Node indices only ever reference earlier nodes, so the recorded
// order is already topological.
//
// Constants (weights, cached corrupt activations) are leaves: gradients are
// not allocated or propagated into them.
template <typename Scalar>
class Tape {
 public:
  using M = Mat<Scalar>;

  struct Ref {
    Index i = -1;
    bool valid() const { return i >= 0; }
  };

  // ---- op recording -------------------------------------------------------

  Ref constant(M value, std::string label = "const") {
    if (!value.allFinite()) {
      throw NumericalError("non-finite value in constant '" + label + "'");
    }
    return push(Op::Constant, std::move(value), {}, std::move(label));
  }

  // Leaf referencing caller-owned storage (model weights); no copy is made.
  // The referenced matrix must outlive the tape and is assumed finite.
  Ref constant_ref(const M* value, std::string label = "const_ref") {
    Node n;
    n.op = Op::Constant;
    n.ext = value;
    n.label = std::move(label);
    nodes_.push_back(std::move(n));
    return Ref{static_cast<Index>(nodes_.size()) - 1};
  }

  // out = table.row(ids[0..n)); table stays a leaf.
  Ref embedding(Ref table, const TokenSeq& ids, std::string label = "embedding") {
    require_constant(table, "embedding table");
    const M& t = value(table);
    M out(static_cast<Index>(ids.size()), t.cols());
    for (Index i = 0; i < out.rows(); ++i) {
      const TokenId id = ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= t.rows()) {
        throw DataError(label + ": token id " + std::to_string(id) + " out of range [0, " +
                        std::to_string(t.rows()) + ")");
      }
      out.row(i) = t.row(id);
    }
    return push(Op::Embedding, std::move(out), {table}, std::move(label));
  }

  Ref matmul(Ref a, Ref b) {
    require_cols_rows(a, b, "matmul");
    return push(Op::MatMul, value(a) * value(b), {a, b}, "matmul");
  }

  // out = a * b^T (used for attention scores).
  Ref matmul_nt(Ref a, Ref b) {
    if (value(a).cols() != value(b).cols()) throw DataError("matmul_nt: inner dims differ");
    return push(Op::MatMulNT, value(a) * value(b).transpose(), {a, b}, "matmul_nt");
  }

  Ref add(Ref a, Ref b) {
    require_same_shape(a, b, "add");
    return push(Op::Add, value(a) + value(b), {a, b}, "add");
  }

  Ref sub(Ref a, Ref b) {
    require_same_shape(a, b, "sub");
    return push(Op::Sub, value(a) - value(b), {a, b}, "sub");
  }

  // out = a + ones * bias; bias is a 1 x cols row. The only broadcast the
  // tape performs — anything else needs an explicit reshape.
  Ref add_row_bias(Ref a, Ref bias) {
    const M& b = value(bias);
    if (b.rows() != 1 || b.cols() != value(a).cols()) {
      throw DataError("add_row_bias: bias must be 1 x cols of the left operand");
    }
    M out = value(a);
    out.rowwise() += b.row(0);
    return push(Op::AddRowBias, std::move(out), {a, bias}, "add_row_bias");
  }

  Ref scale(Ref a, double s) {
    Ref r = push(Op::Scale, value(a) * Scalar(s), {a}, "scale");
    node(r).scalar_arg = s;
    return r;
  }

  // Value-preserving copy. Gradient at the copy reflects only its own
  // consumers, which is what makes per-reader gradients separable.
  Ref copy(Ref a, std::string label = "copy") {
    return push(Op::Copy, value(a), {a}, std::move(label));
  }

  Ref gelu(Ref a) {
    return push(Op::Gelu, gelu_tanh<Scalar>(value(a)), {a}, "gelu");
  }

  Ref causal_softmax_op(Ref scores) {
    if (value(scores).rows() != value(scores).cols()) {
      throw DataError("causal_softmax: scores must be square (seq x seq)");
    }
    return push(Op::CausalSoftmax, causal_softmax(value(scores)), {scores}, "causal_softmax");
  }

  Ref softmax_rows_op(Ref a) {
    return push(Op::SoftmaxRows, softmax_rows(value(a)), {a}, "softmax_rows");
  }

  // out = (x - mean) / sqrt(var + eps) .* w + b, per row; w, b are leaves.
  Ref layer_norm(Ref x, Ref w, Ref b, double eps = 1e-5) {
    require_constant(w, "layer_norm scale");
    require_constant(b, "layer_norm shift");
    const M& in = value(x);
    const M& wv = value(w);
    const M& bv = value(b);
    if (wv.rows() != 1 || bv.rows() != 1 || wv.cols() != in.cols() || bv.cols() != in.cols()) {
      throw DataError("layer_norm: scale/shift must be 1 x cols rows");
    }
    M xhat(in.rows(), in.cols());
    M inv_std(in.rows(), 1);
    const double n = static_cast<double>(in.cols());
    for (Index i = 0; i < in.rows(); ++i) {
      double mu = 0;
      for (Index j = 0; j < in.cols(); ++j) mu += static_cast<double>(in(i, j));
      mu /= n;
      double var = 0;
      for (Index j = 0; j < in.cols(); ++j) {
        const double d = static_cast<double>(in(i, j)) - mu;
        var += d * d;
      }
      var /= n;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std(i, 0) = Scalar(is);
      for (Index j = 0; j < in.cols(); ++j) {
        xhat(i, j) = Scalar((static_cast<double>(in(i, j)) - mu) * is);
      }
    }
    M out = xhat;
    out.array().rowwise() *= wv.row(0).array();
    out.rowwise() += bv.row(0);
    Ref r = push(Op::LayerNorm, std::move(out), {x, w, b}, "layer_norm");
    node(r).aux.push_back(std::move(xhat));
    node(r).aux.push_back(std::move(inv_std));
    return r;
  }

  Ref slice_rows(Ref a, Index start, Index count) {
    require_block(value(a).rows(), start, count, "slice_rows");
    Ref r = push(Op::SliceRows, value(a).middleRows(start, count), {a}, "slice_rows");
    node(r).index_args = {start, count};
    return r;
  }

  Ref slice_cols(Ref a, Index start, Index count) {
    require_block(value(a).cols(), start, count, "slice_cols");
    Ref r = push(Op::SliceCols, value(a).middleCols(start, count), {a}, "slice_cols");
    node(r).index_args = {start, count};
    return r;
  }

  Ref concat_cols(Ref a, Ref b) {
    if (value(a).rows() != value(b).rows()) throw DataError("concat_cols: row counts differ");
    M out(value(a).rows(), value(a).cols() + value(b).cols());
    out.leftCols(value(a).cols()) = value(a);
    out.rightCols(value(b).cols()) = value(b);
    return push(Op::ConcatCols, std::move(out), {a, b}, "concat_cols");
  }

  // 1x1 node: sum of all entries, accumulated in double.
  Ref sum_all(Ref a) {
    double s = value(a).template cast<double>().sum();
    M out(1, 1);
    out(0, 0) = Scalar(s);
    return push(Op::SumAll, std::move(out), {a}, "sum_all");
  }

  // 1x1 node: sum of weighted picked entries, accumulated in double.
  Ref entry_sum(Ref a, std::vector<EntryWeight> entries, std::string label = "entry_sum") {
    const M& v = value(a);
    double s = 0;
    for (const auto& e : entries) {
      if (e.row < 0 || e.row >= v.rows() || e.col < 0 || e.col >= v.cols()) {
        throw DataError(label + ": entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                        ") out of range");
      }
      s += e.weight * static_cast<double>(v(e.row, e.col));
    }
    M out(1, 1);
    out(0, 0) = Scalar(s);
    Ref r = push(Op::EntrySum, std::move(out), {a}, std::move(label));
    node(r).entries = std::move(entries);
    return r;
  }

  // 1x1 node: KL(ref || softmax(row)) for a single 1 x vocab logits row.
  // d/d logits = softmax(logits) - ref.
  Ref kl_vs_ref(Ref logits_row, Eigen::RowVectorXd ref_probs) {
    const M& v = value(logits_row);
    if (v.rows() != 1 || v.cols() != ref_probs.cols()) {
      throw DataError("kl_vs_ref: expects a 1 x vocab row matching the reference");
    }
    Eigen::RowVectorXd row = v.row(0).template cast<double>();
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    double kl = 0;
    for (Index j = 0; j < row.cols(); ++j) {
      const double p = ref_probs(j);
      if (p > 0) kl += p * (std::log(p) - (row(j) - lse));
    }
    M out(1, 1);
    out(0, 0) = Scalar(std::max(kl, 0.0));  // clear rounding residue below zero
    Ref r = push(Op::KlVsRef, std::move(out), {logits_row}, "kl_vs_ref");
    M probs = (row.array() - lse).exp().matrix().template cast<Scalar>();
    M ref = ref_probs.template cast<Scalar>();
    node(r).aux.push_back(std::move(probs));
    node(r).aux.push_back(std::move(ref));
    return r;
  }

  // ---- hooks ---------------------------------------------------------------

  void bind_hook(const std::string& name, Ref r) {
    check(r);
    if (!hooks_.emplace(name, r.i).second) {
      throw DataError("hook '" + name + "' bound twice in one forward pass");
    }
  }

  bool has_hook(const std::string& name) const { return hooks_.count(name) != 0; }

  Ref hook(const std::string& name) const {
    auto it = hooks_.find(name);
    if (it == hooks_.end()) throw DataError("unknown hook name '" + name + "'");
    return Ref{it->second};
  }

  const std::unordered_map<std::string, Index>& hooks() const { return hooks_; }

  // ---- access ---------------------------------------------------------------

  const M& value(Ref r) const {
    check(r);
    return nodes_[r.i].val();
  }

  // Gradient accumulated by the last backward(); zeros for nodes the seed
  // does not reach (a hook the metric is constant in gets an all-zero grad).
  const M& grad(Ref r) {
    check(r);
    ensure_grad(r.i);
    return nodes_[r.i].grad;
  }

  bool backward_ran() const { return backward_ran_; }
  Index size() const { return static_cast<Index>(nodes_.size()); }

  // ---- backward -------------------------------------------------------------

  // Seeds d(seed_node) = seed and traverses the tape exactly once in reverse.
  // The seed node must be a 1x1 scalar recorded on this tape.
  void backward(Ref seed_node, Scalar seed = Scalar(1)) {
    if (backward_ran_) throw DataError("backward already ran on this tape");
    if (!seed_node.valid() || seed_node.i >= size()) {
      throw DataError("backward: seed node is not part of this tape (detached node)");
    }
    if (nodes_[seed_node.i].val().size() != 1) {
      throw DataError("backward: seed node must be a scalar");
    }
    ensure_grad(seed_node.i);
    nodes_[seed_node.i].grad(0, 0) += seed;
    for (Index i = seed_node.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;  // not reached
      propagate(n);
    }
    backward_ran_ = true;
    pass_counters().count_backward();
  }

 private:
  enum class Op {
    Constant,
    Embedding,
    MatMul,
    MatMulNT,
    Add,
    Sub,
    AddRowBias,
    Scale,
    Copy,
    Gelu,
    CausalSoftmax,
    SoftmaxRows,
    LayerNorm,
    SliceRows,
    SliceCols,
    ConcatCols,
    SumAll,
    EntrySum,
    KlVsRef,
  };

  struct Node {
    Op op;
    M value;
    const M* ext = nullptr;  // external storage for constant_ref leaves
    M grad;                  // empty until reached by backward
    Index in0 = -1, in1 = -1, in2 = -1;
    std::vector<M> aux;
    std::vector<Index> index_args;
    std::vector<EntryWeight> entries;
    double scalar_arg = 0;
    std::string label;

    const M& val() const { return ext ? *ext : value; }
  };

  Ref push(Op op, M value, std::initializer_list<Ref> inputs, std::string label) {
    if (!value.allFinite()) {
      throw NumericalError("non-finite value produced by op '" + label + "'");
    }
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.label = std::move(label);
    auto it = inputs.begin();
    if (inputs.size() > 0) n.in0 = it[0].i;
    if (inputs.size() > 1) n.in1 = it[1].i;
    if (inputs.size() > 2) n.in2 = it[2].i;
    nodes_.push_back(std::move(n));
    return Ref{static_cast<Index>(nodes_.size()) - 1};
  }

  Node& node(Ref r) { return nodes_[r.i]; }

  void check(Ref r) const {
    if (!r.valid() || r.i >= size()) throw DataError("invalid tape node reference");
  }

  void require_constant(Ref r, const char* what) const {
    check(r);
    if (nodes_[r.i].op != Op::Constant) {
      throw DataError(std::string(what) + " must be a constant leaf");
    }
  }

  void ensure_grad(Index i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) n.grad = M::Zero(n.val().rows(), n.val().cols());
  }

  // Accumulate into an input's grad unless it is a leaf constant.
  void accum(Index input, const M& g) {
    if (input < 0) return;
    if (nodes_[input].op == Op::Constant) return;
    ensure_grad(input);
    nodes_[input].grad += g;
  }

  static void require_block(Index extent, Index start, Index count, const char* what) {
    if (start < 0 || count < 0 || start + count > extent) {
      throw DataError(std::string(what) + ": block out of range");
    }
  }

  void require_same_shape(Ref a, Ref b, const char* what) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
      throw DataError(std::string(what) + ": shape mismatch");
    }
  }

  void require_cols_rows(Ref a, Ref b, const char* what) const {
    if (value(a).cols() != value(b).rows()) {
      throw DataError(std::string(what) + ": inner dims differ");
    }
  }

  void propagate(Node& n) {
    const M& g = n.grad;
    switch (n.op) {
      case Op::Constant:
      case Op::Embedding:
        break;  // leaves (the embedding table is a constant)
      case Op::MatMul:
        accum(n.in0, g * nodes_[n.in1].val().transpose());
        accum(n.in1, nodes_[n.in0].val().transpose() * g);
        break;
      case Op::MatMulNT:
        accum(n.in0, g * nodes_[n.in1].val());
        accum(n.in1, g.transpose() * nodes_[n.in0].val());
        break;
      case Op::Add:
        accum(n.in0, g);
        accum(n.in1, g);
        break;
      case Op::Sub:
        accum(n.in0, g);
        accum(n.in1, -g);
        break;
      case Op::AddRowBias: {
        accum(n.in0, g);
        if (nodes_[n.in1].op != Op::Constant) {
          M gb = g.colwise().sum();
          accum(n.in1, gb);
        }
        break;
      }
      case Op::Scale:
        accum(n.in0, g * Scalar(n.scalar_arg));
        break;
      case Op::Copy:
        accum(n.in0, g);
        break;
      case Op::Gelu: {
        const M& x = nodes_[n.in0].val();
        M gx = g.array() * x.unaryExpr([](Scalar v) { return gelu_tanh_grad(v); }).array();
        accum(n.in0, gx);
        break;
      }
      case Op::CausalSoftmax:
      case Op::SoftmaxRows: {
        // ds = a .* (g - rowdot(g, a)); masked entries of a are zero.
        const M& a = n.val();
        M gs(a.rows(), a.cols());
        for (Index i = 0; i < a.rows(); ++i) {
          const Scalar dot = a.row(i).dot(g.row(i));
          gs.row(i) = a.row(i).array() * (g.row(i).array() - dot);
        }
        accum(n.in0, gs);
        break;
      }
      case Op::LayerNorm: {
        const M& xhat = n.aux[0];
        const M& inv_std = n.aux[1];
        const M& w = nodes_[n.in1].val();
        M gx(xhat.rows(), xhat.cols());
        const Scalar ncols = Scalar(xhat.cols());
        for (Index i = 0; i < xhat.rows(); ++i) {
          RowVec<Scalar> dxhat = g.row(i).array() * w.row(0).array();
          const Scalar mean_dxhat = dxhat.sum() / ncols;
          const Scalar mean_dxhat_xhat = dxhat.dot(xhat.row(i)) / ncols;
          gx.row(i) =
              inv_std(i, 0) * (dxhat.array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat);
        }
        accum(n.in0, gx);
        break;
      }
      case Op::SliceRows: {
        M gx = M::Zero(nodes_[n.in0].val().rows(), nodes_[n.in0].val().cols());
        gx.middleRows(n.index_args[0], n.index_args[1]) = g;
        accum(n.in0, gx);
        break;
      }
      case Op::SliceCols: {
        M gx = M::Zero(nodes_[n.in0].val().rows(), nodes_[n.in0].val().cols());
        gx.middleCols(n.index_args[0], n.index_args[1]) = g;
        accum(n.in0, gx);
        break;
      }
      case Op::ConcatCols: {
        const Index ca = nodes_[n.in0].val().cols();
        accum(n.in0, g.leftCols(ca));
        accum(n.in1, g.rightCols(g.cols() - ca));
        break;
      }
      case Op::SumAll: {
        accum(n.in0, M::Constant(nodes_[n.in0].val().rows(), nodes_[n.in0].val().cols(), g(0, 0)));
        break;
      }
      case Op::EntrySum: {
        M gx = M::Zero(nodes_[n.in0].val().rows(), nodes_[n.in0].val().cols());
        for (const auto& e : n.entries) gx(e.row, e.col) += Scalar(e.weight) * g(0, 0);
        accum(n.in0, gx);
        break;
      }
      case Op::KlVsRef: {
        const M& probs = n.aux[0];
        const M& ref = n.aux[1];
        accum(n.in0, (probs - ref) * g(0, 0));
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, Index> hooks_;
  bool backward_ran_ = false;
};

}  // namespace circscope
