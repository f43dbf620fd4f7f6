#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "circscope/graph.hpp"
#include "circscope/model_config.hpp"
#include "circscope/tape.hpp"
#include "circscope/tasks.hpp"
#include "circscope/weights.hpp"

namespace circscope {

// do(edge = lambda * corrupt + (1 - lambda) * current): adds
// lambda * (corrupt_src - src) to the destination reader's accumulation
// input. Only that reader is touched; downstream recomputes naturally.
template <typename Scalar>
struct EdgeIntervention {
  Edge edge;
  double lambda = 1.0;
  Mat<Scalar> corrupt_src;  // writer output captured from a corrupt run
};

// A metric bound to one prompt pair. For KL the reference distribution is
// the softmax of the unpatched clean run; when kl_ref is empty the run's own
// logits serve as the reference (the "clean point", where the gradient is
// the zero vector).
struct MetricBinding {
  MetricKind kind = MetricKind::LogitDiff;
  Index answer_pos = 0;
  std::vector<TokenId> correct;
  std::vector<TokenId> wrong;
  std::optional<Eigen::RowVectorXd> kl_ref;
};

MetricBinding bind_metric(const MetricSpec& spec, const PromptPair& pair);
MetricBinding bind_metric_with_ref(const MetricSpec& spec, const PromptPair& pair,
                                   Eigen::RowVectorXd clean_ref_probs);

template <typename Scalar>
struct RunOptions {
  const std::vector<EdgeIntervention<Scalar>>* interventions = nullptr;
  std::optional<MetricBinding> metric;
  // Reference mode: materialize one copy node per incoming edge at every
  // reader instead of a single tap, so per-edge gradients can be read
  // directly (hook "edge:<edge_id>"). Costs O(edges) memory; tests only.
  bool edge_taps = false;
  // Hooks that must exist after the build; unknown names raise DataError.
  std::vector<std::string> required_hooks;
};

// One recorded forward pass: the activation cache, the metric node, and
// after backward() the gradient cache. Single-owner; the model must outlive
// every run it produced.
template <typename Scalar>
class ForwardRun {
 public:
  using M = Mat<Scalar>;

  const M& activation(const std::string& hook) const { return tape_.value(tape_.hook(hook)); }
  const M& logits() const { return tape_.value(logits_); }

  const M& writer_output(const NodeId& w) const { return activation(writer_hook(w)); }
  // The reader's accumulation input (pre-layernorm), interventions applied.
  const M& reader_input(const NodeId& r) const { return activation(reader_hook(r)); }

  bool has_metric() const { return metric_.valid(); }
  double metric_value() const {
    if (!metric_.valid()) throw DataError("run has no metric node");
    return static_cast<double>(tape_.value(metric_)(0, 0));
  }

  // One reverse traversal from the metric node. Populates gradients for
  // every reader tap simultaneously.
  void backward(double seed = 1.0) {
    if (!metric_.valid()) throw DataError("backward requires a metric node");
    tape_.backward(metric_, Scalar(seed));
  }
  bool backward_ran() const { return tape_.backward_ran(); }

  const M& gradient(const std::string& hook) { return tape_.grad(tape_.hook(hook)); }
  const M& reader_input_grad(const NodeId& r) { return gradient(reader_hook(r)); }
  const M& edge_grad(const Edge& e) { return gradient("edge:" + edge_id(e)); }

  // Norm of the gradient at the logits; the zero-gradient warning trigger.
  double logits_grad_norm() { return tape_.grad(logits_).template cast<double>().norm(); }

  Tape<Scalar>& tape() { return tape_; }
  const Tape<Scalar>& tape() const { return tape_; }

 private:
  template <typename S>
  friend class DecomposedModel;

  Tape<Scalar> tape_;
  typename Tape<Scalar>::Ref logits_;
  typename Tape<Scalar>::Ref metric_;
};

// Decomposed transformer: the residual stream is an explicit sum of writer
// outputs, and every reader consumes its own copy of that sum. Values match
// an undecomposed forward pass; gradients separate per reader, so one
// backward pass serves every edge.
template <typename Scalar>
class DecomposedModel {
 public:
  using M = Mat<Scalar>;

  DecomposedModel(ModelConfig config, Weights<Scalar> weights)
      : cfg_(std::move(config)), w_(std::move(weights)), graph_(build_graph(cfg_)) {
    cfg_.validate();
    validate_shapes();
    slice_head_biases();
  }

  const ModelConfig& config() const { return cfg_; }
  const DecomposedGraph& graph() const { return graph_; }
  const Weights<Scalar>& weights() const { return w_; }

  ForwardRun<Scalar> forward(const TokenSeq& tokens, const RunOptions<Scalar>& opts = {}) const;

  std::vector<ForwardRun<Scalar>> forward_batch(const std::vector<TokenSeq>& batch,
                                                const RunOptions<Scalar>& opts = {}) const {
    std::vector<ForwardRun<Scalar>> out;
    out.reserve(batch.size());
    for (const auto& row : batch) out.push_back(forward(row, opts));
    return out;
  }

 private:
  using Ref = typename Tape<Scalar>::Ref;

  void validate_shapes() const;
  void slice_head_biases();

  struct BuildState;
  Ref build_reader_tap(BuildState& st, const NodeId& reader) const;

  ModelConfig cfg_;
  Weights<Scalar> w_;
  DecomposedGraph graph_;
  // Per-head 1 x d_head bias rows sliced once at construction.
  std::vector<std::vector<M>> bq_, bk_, bv_;
};

// ---- implementation ---------------------------------------------------------

template <typename Scalar>
void DecomposedModel<Scalar>::validate_shapes() const {
  auto expect = [](const M& m, Index r, Index c, const std::string& name) {
    if (m.rows() != r || m.cols() != c) {
      throw DataError("weight '" + name + "': expected shape (" + std::to_string(r) + ", " +
                      std::to_string(c) + "), got (" + std::to_string(m.rows()) + ", " +
                      std::to_string(m.cols()) + ")");
    }
    if (!m.allFinite()) throw NumericalError("weight '" + name + "' has non-finite values");
  };
  const Index d = cfg_.d_model, dh = cfg_.d_head, H = cfg_.n_heads, V = cfg_.vocab_size;
  expect(w_.W_E, V, d, "embed.W_E");
  expect(w_.W_pos, cfg_.n_ctx, d, "pos.W_pos");
  if (static_cast<int>(w_.attn.size()) != cfg_.n_layers) {
    throw DataError("weights: wrong number of attention layers");
  }
  if (cfg_.has_mlp() && static_cast<int>(w_.mlp.size()) != cfg_.n_layers) {
    throw DataError("weights: wrong number of MLP layers");
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& a = w_.attn[l];
    const std::string p = "a" + std::to_string(l) + ".";
    if (static_cast<int>(a.W_Q.size()) != H || static_cast<int>(a.W_K.size()) != H ||
        static_cast<int>(a.W_V.size()) != H || static_cast<int>(a.W_O.size()) != H) {
      throw DataError("weights: layer " + std::to_string(l) + " head count mismatch");
    }
    for (int h = 0; h < H; ++h) {
      const std::string hp = p + "h" + std::to_string(h) + ".";
      expect(a.W_Q[h], d, dh, hp + "W_Q");
      expect(a.W_K[h], d, dh, hp + "W_K");
      expect(a.W_V[h], d, dh, hp + "W_V");
      expect(a.W_O[h], dh, d, hp + "W_O");
    }
    expect(a.b_Q, 1, H * dh, p + "b_Q");
    expect(a.b_K, 1, H * dh, p + "b_K");
    expect(a.b_V, 1, H * dh, p + "b_V");
    expect(a.b_O, 1, d, p + "b_O");
    if (cfg_.layernorm == LayerNormMode::Pre) {
      expect(a.ln1_w, 1, d, "ln1." + std::to_string(l) + ".w");
      expect(a.ln1_b, 1, d, "ln1." + std::to_string(l) + ".b");
    }
    if (cfg_.has_mlp()) {
      const auto& m = w_.mlp[l];
      const std::string mp = "m" + std::to_string(l) + ".";
      expect(m.W_in, d, cfg_.d_mlp, mp + "W_in");
      expect(m.b_in, 1, cfg_.d_mlp, mp + "b_in");
      expect(m.W_out, cfg_.d_mlp, d, mp + "W_out");
      expect(m.b_out, 1, d, mp + "b_out");
      if (cfg_.layernorm == LayerNormMode::Pre) {
        expect(m.ln2_w, 1, d, "ln2." + std::to_string(l) + ".w");
        expect(m.ln2_b, 1, d, "ln2." + std::to_string(l) + ".b");
      }
    }
  }
  if (cfg_.layernorm == LayerNormMode::Pre) {
    expect(w_.lnf_w, 1, d, "lnf.w");
    expect(w_.lnf_b, 1, d, "lnf.b");
  }
  expect(w_.W_U, d, V, "unembed.W_U");
  expect(w_.b_U, 1, V, "unembed.b_U");
}

template <typename Scalar>
void DecomposedModel<Scalar>::slice_head_biases() {
  const Index dh = cfg_.d_head;
  bq_.resize(cfg_.n_layers);
  bk_.resize(cfg_.n_layers);
  bv_.resize(cfg_.n_layers);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    for (int h = 0; h < cfg_.n_heads; ++h) {
      bq_[l].push_back(w_.attn[l].b_Q.middleCols(h * dh, dh));
      bk_[l].push_back(w_.attn[l].b_K.middleCols(h * dh, dh));
      bv_[l].push_back(w_.attn[l].b_V.middleCols(h * dh, dh));
    }
  }
}

template <typename Scalar>
struct DecomposedModel<Scalar>::BuildState {
  Tape<Scalar>* tape = nullptr;
  Index seq = 0;
  Ref chain;      // running residual sum
  Mat<Scalar> bias_so_far;  // accumulated layer output biases (edge-tap mode)
  Ref pos_rows;   // shortformer: positions added to q/k inputs
  bool edge_taps = false;
  // writer node refs by canonical writer id
  std::unordered_map<std::string, Ref> writer_nodes;
  // interventions grouped by destination reader id
  std::unordered_map<std::string, std::vector<const EdgeIntervention<Scalar>*>> by_reader;
};

template <typename Scalar>
typename DecomposedModel<Scalar>::Ref DecomposedModel<Scalar>::build_reader_tap(
    BuildState& st, const NodeId& reader) const {
  Tape<Scalar>& t = *st.tape;
  Ref tap;
  if (st.edge_taps) {
    // One copy node per incoming edge; gradient at each copy is the
    // per-edge gradient and equals the tap gradient exactly (the tap is a
    // plain sum of the copies).
    for (const NodeId& w : graph_.writers) {
      if (!graph_.valid_edge(w, reader)) continue;
      Edge e{w, reader};
      Ref ec = t.copy(st.writer_nodes.at(to_string(w)), "edge_tap");
      t.bind_hook("edge:" + edge_id(e), ec);
      tap = tap.valid() ? t.add(tap, ec) : ec;
    }
    Ref bias = t.constant(st.bias_so_far, "bias_so_far");
    tap = tap.valid() ? t.add(tap, bias) : bias;
  } else {
    tap = t.copy(st.chain, "tap");
  }
  // Apply do(edge) deltas for this reader: tap += lambda * (corrupt - src).
  auto it = st.by_reader.find(to_string(reader));
  if (it != st.by_reader.end()) {
    for (const EdgeIntervention<Scalar>* iv : it->second) {
      Ref src_node = st.writer_nodes.at(to_string(iv->edge.src));
      if (iv->corrupt_src.rows() != st.seq || iv->corrupt_src.cols() != cfg_.d_model) {
        throw DataError("intervention on '" + edge_id(iv->edge) +
                        "': corrupt activation shape mismatch");
      }
      Ref corr = t.constant(iv->corrupt_src, "corrupt_src");
      Ref delta = t.sub(corr, src_node);
      if (iv->lambda != 1.0) delta = t.scale(delta, iv->lambda);
      tap = t.add(tap, delta);
    }
  }
  t.bind_hook(reader_hook(reader), tap);
  return tap;
}

template <typename Scalar>
ForwardRun<Scalar> DecomposedModel<Scalar>::forward(const TokenSeq& tokens,
                                                    const RunOptions<Scalar>& opts) const {
  pass_counters().count_forward();
  const Index seq = static_cast<Index>(tokens.size());
  if (seq == 0) throw DataError("forward: empty token sequence");
  if (seq > cfg_.n_ctx) throw DataError("forward: sequence longer than n_ctx");
  for (TokenId id : tokens) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw DataError("forward: token id " + std::to_string(id) + " out of range");
    }
  }

  ForwardRun<Scalar> run;
  Tape<Scalar>& t = run.tape_;

  BuildState st;
  st.tape = &t;
  st.seq = seq;
  st.edge_taps = opts.edge_taps;
  st.bias_so_far = M::Zero(seq, cfg_.d_model);

  if (opts.interventions) {
    for (const auto& iv : *opts.interventions) {
      if (!graph_.has_edge(iv.edge)) {
        throw DataError("intervention edge '" + edge_id(iv.edge) + "' not in graph");
      }
      if (iv.lambda < 0.0 || iv.lambda > 1.0) {
        throw DataError("intervention lambda must lie in [0, 1]");
      }
      st.by_reader[to_string(iv.edge.dst)].push_back(&iv);
    }
  }

  // Embedding writers.
  Ref we = t.constant_ref(&w_.W_E, "embed.W_E");
  Ref embed_out = t.embedding(we, tokens, "embed");
  t.bind_hook("embed.out", embed_out);
  st.writer_nodes.emplace("embed", embed_out);
  st.chain = embed_out;

  Ref wpos = t.constant_ref(&w_.W_pos, "pos.W_pos");
  Ref pos_rows = t.slice_rows(wpos, 0, seq);
  if (cfg_.positional == PositionalMode::Learned) {
    t.bind_hook("pos.out", pos_rows);
    st.writer_nodes.emplace("pos", pos_rows);
    st.chain = t.add(st.chain, pos_rows);
  } else {
    st.pos_rows = pos_rows;  // q/k inputs only; never enters the residual
  }

  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_head));

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const auto& a = w_.attn[l];
    Ref ln1_w, ln1_b;
    if (cfg_.layernorm == LayerNormMode::Pre) {
      ln1_w = t.constant_ref(&a.ln1_w, "ln1.w");
      ln1_b = t.constant_ref(&a.ln1_b, "ln1.b");
    }
    std::vector<Ref> head_outs;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      Ref qkv[3];
      const NodeKind ports[3] = {NodeKind::HeadQ, NodeKind::HeadK, NodeKind::HeadV};
      for (int p = 0; p < 3; ++p) {
        NodeId reader{ports[p], l, h};
        Ref x = build_reader_tap(st, reader);
        if (cfg_.positional == PositionalMode::Shortformer && p < 2) {
          x = t.add(x, st.pos_rows);
        }
        if (cfg_.layernorm == LayerNormMode::Pre) x = t.layer_norm(x, ln1_w, ln1_b);
        const M* W = p == 0 ? &a.W_Q[h] : (p == 1 ? &a.W_K[h] : &a.W_V[h]);
        const M* b = p == 0 ? &bq_[l][h] : (p == 1 ? &bk_[l][h] : &bv_[l][h]);
        Ref proj = t.matmul(x, t.constant_ref(W, "W_qkv"));
        qkv[p] = t.add_row_bias(proj, t.constant_ref(b, "b_qkv"));
      }
      Ref scores = t.scale(t.matmul_nt(qkv[0], qkv[1]), attn_scale);
      Ref pattern = t.causal_softmax_op(scores);
      Ref z = t.matmul(pattern, qkv[2]);
      Ref head_out = t.matmul(z, t.constant_ref(&a.W_O[h], "W_O"));
      NodeId writer{NodeKind::HeadOut, l, h};
      t.bind_hook(writer_hook(writer), head_out);
      st.writer_nodes.emplace(to_string(writer), head_out);
      head_outs.push_back(head_out);
    }
    for (Ref ho : head_outs) st.chain = t.add(st.chain, ho);
    st.chain = t.add_row_bias(st.chain, t.constant_ref(&a.b_O, "b_O"));
    st.bias_so_far.rowwise() += a.b_O.row(0);

    if (cfg_.has_mlp()) {
      const auto& m = w_.mlp[l];
      NodeId reader{NodeKind::MlpIn, l, -1};
      Ref x = build_reader_tap(st, reader);
      if (cfg_.layernorm == LayerNormMode::Pre) {
        x = t.layer_norm(x, t.constant_ref(&m.ln2_w, "ln2.w"), t.constant_ref(&m.ln2_b, "ln2.b"));
      }
      Ref pre = t.add_row_bias(t.matmul(x, t.constant_ref(&m.W_in, "W_in")),
                               t.constant_ref(&m.b_in, "b_in"));
      Ref act = t.gelu(pre);
      Ref m_out = t.add_row_bias(t.matmul(act, t.constant_ref(&m.W_out, "W_out")),
                                 t.constant_ref(&m.b_out, "b_out"));
      NodeId writer{NodeKind::MlpOut, l, -1};
      t.bind_hook(writer_hook(writer), m_out);
      st.writer_nodes.emplace(to_string(writer), m_out);
      st.chain = t.add(st.chain, m_out);
    }
  }

  NodeId final_reader{NodeKind::FinalIn, -1, -1};
  Ref x = build_reader_tap(st, final_reader);
  if (cfg_.layernorm == LayerNormMode::Pre) {
    x = t.layer_norm(x, t.constant_ref(&w_.lnf_w, "lnf.w"), t.constant_ref(&w_.lnf_b, "lnf.b"));
  }
  Ref logits = t.add_row_bias(t.matmul(x, t.constant_ref(&w_.W_U, "W_U")),
                              t.constant_ref(&w_.b_U, "b_U"));
  t.bind_hook("logits", logits);
  run.logits_ = logits;

  if (opts.metric) {
    const MetricBinding& mb = *opts.metric;
    if (mb.answer_pos < 0 || mb.answer_pos >= seq) {
      throw DataError("metric: answer position out of range");
    }
    switch (mb.kind) {
      case MetricKind::LogitDiff: {
        std::vector<EntryWeight> entries;
        for (TokenId tok : mb.correct) entries.push_back({mb.answer_pos, tok, 1.0});
        for (TokenId tok : mb.wrong) entries.push_back({mb.answer_pos, tok, -1.0});
        run.metric_ = t.entry_sum(logits, std::move(entries), "logit_diff");
        break;
      }
      case MetricKind::ProbDiff: {
        Ref row = t.slice_rows(logits, mb.answer_pos, 1);
        Ref probs = t.softmax_rows_op(row);
        std::vector<EntryWeight> entries;
        for (TokenId tok : mb.correct) entries.push_back({0, tok, 1.0});
        for (TokenId tok : mb.wrong) entries.push_back({0, tok, -1.0});
        run.metric_ = t.entry_sum(probs, std::move(entries), "prob_diff");
        break;
      }
      case MetricKind::KlDivergence: {
        Ref row = t.slice_rows(logits, mb.answer_pos, 1);
        Eigen::RowVectorXd ref =
            mb.kl_ref ? *mb.kl_ref : softmax_row_f64(t.value(logits).row(mb.answer_pos));
        run.metric_ = t.kl_vs_ref(row, std::move(ref));
        break;
      }
    }
  }

  for (const std::string& name : opts.required_hooks) {
    if (!t.has_hook(name)) throw DataError("unknown hook name '" + name + "'");
  }
  return run;
}

}  // namespace circscope
