#pragma once

#include <map>
#include <string>
#include <vector>

#include "circscope/model_config.hpp"
#include "circscope/tensor.hpp"

namespace circscope {

// Expected tensor set for a config, in canonical manifest order.
struct TensorSpec {
  std::string name;
  std::vector<Index> shape;
};

std::vector<TensorSpec> weight_manifest(const ModelConfig& config);

// In-memory weights. Attention projections are stored per head: W_Q/W_K/W_V
// are (d_model, d_head) and W_O is (d_head, d_model); the container keeps the
// same granularity. Layer biases b_Q/b_K/b_V are 1 x (n_heads * d_head) rows
// sliced per head at use; b_O is added once per layer.
template <typename Scalar>
struct AttnWeights {
  std::vector<Mat<Scalar>> W_Q, W_K, W_V, W_O;
  Mat<Scalar> b_Q, b_K, b_V, b_O;
  Mat<Scalar> ln1_w, ln1_b;  // present when layernorm == Pre
};

template <typename Scalar>
struct MlpWeights {
  Mat<Scalar> W_in, b_in, W_out, b_out;
  Mat<Scalar> ln2_w, ln2_b;  // present when layernorm == Pre
};

template <typename Scalar>
struct Weights {
  Mat<Scalar> W_E;     // (vocab, d_model)
  Mat<Scalar> W_pos;   // (n_ctx, d_model)
  std::vector<AttnWeights<Scalar>> attn;
  std::vector<MlpWeights<Scalar>> mlp;  // empty when d_mlp == 0
  Mat<Scalar> lnf_w, lnf_b;             // present when layernorm == Pre
  Mat<Scalar> W_U;     // (d_model, vocab)
  Mat<Scalar> b_U;     // 1 x vocab
};

using WeightsF = Weights<float>;

// Named-tensor view of the weights (the container's exchange format).
std::map<std::string, TensorF> tensors_from_weights(const ModelConfig& config,
                                                    const WeightsF& weights);

// Builds weights from named tensors, enforcing the manifest exactly:
// missing or extra tensors and shape mismatches are DataErrors.
WeightsF weights_from_tensors(const ModelConfig& config,
                              const std::map<std::string, TensorF>& tensors);

template <typename To>
Weights<To> cast_weights(const WeightsF& w) {
  if constexpr (std::is_same_v<To, float>) {
    return w;
  } else {
    Weights<To> out;
    auto conv = [](const MatF& m) { return m.template cast<To>().eval(); };
    out.W_E = conv(w.W_E);
    out.W_pos = conv(w.W_pos);
    for (const auto& a : w.attn) {
      AttnWeights<To> t;
      for (const auto& m : a.W_Q) t.W_Q.push_back(conv(m));
      for (const auto& m : a.W_K) t.W_K.push_back(conv(m));
      for (const auto& m : a.W_V) t.W_V.push_back(conv(m));
      for (const auto& m : a.W_O) t.W_O.push_back(conv(m));
      t.b_Q = conv(a.b_Q);
      t.b_K = conv(a.b_K);
      t.b_V = conv(a.b_V);
      t.b_O = conv(a.b_O);
      if (a.ln1_w.size() > 0) {
        t.ln1_w = conv(a.ln1_w);
        t.ln1_b = conv(a.ln1_b);
      }
      out.attn.push_back(std::move(t));
    }
    for (const auto& m : w.mlp) {
      MlpWeights<To> t;
      t.W_in = conv(m.W_in);
      t.b_in = conv(m.b_in);
      t.W_out = conv(m.W_out);
      t.b_out = conv(m.b_out);
      if (m.ln2_w.size() > 0) {
        t.ln2_w = conv(m.ln2_w);
        t.ln2_b = conv(m.ln2_b);
      }
      out.mlp.push_back(std::move(t));
    }
    if (w.lnf_w.size() > 0) {
      out.lnf_w = conv(w.lnf_w);
      out.lnf_b = conv(w.lnf_b);
    }
    out.W_U = conv(w.W_U);
    out.b_U = conv(w.b_U);
    return out;
  }
}

}  // namespace circscope
