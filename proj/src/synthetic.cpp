#include "circscope/synthetic.hpp"

#include <random>

namespace circscope {

namespace {

MatF randn(Index rows, Index cols, std::mt19937& rng, double scale) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  MatF m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng) * static_cast<float>(scale);
  }
  return m;
}

}  // namespace

WeightsF random_weights(const ModelConfig& config, unsigned seed, double scale) {
  config.validate();
  std::mt19937 rng(seed);
  const Index d = config.d_model, dh = config.d_head, H = config.n_heads;
  WeightsF w;
  w.W_E = randn(config.vocab_size, d, rng, scale);
  w.W_pos = randn(config.n_ctx, d, rng, scale);
  for (int l = 0; l < config.n_layers; ++l) {
    AttnWeights<float> a;
    for (int h = 0; h < H; ++h) {
      a.W_Q.push_back(randn(d, dh, rng, scale));
      a.W_K.push_back(randn(d, dh, rng, scale));
      a.W_V.push_back(randn(d, dh, rng, scale));
      a.W_O.push_back(randn(dh, d, rng, scale));
    }
    a.b_Q = randn(1, H * dh, rng, scale / 2);
    a.b_K = randn(1, H * dh, rng, scale / 2);
    a.b_V = randn(1, H * dh, rng, scale / 2);
    a.b_O = randn(1, d, rng, scale / 2);
    if (config.layernorm == LayerNormMode::Pre) {
      a.ln1_w = MatF::Ones(1, d);
      a.ln1_b = MatF::Zero(1, d);
    }
    w.attn.push_back(std::move(a));
    if (config.has_mlp()) {
      MlpWeights<float> m;
      m.W_in = randn(d, config.d_mlp, rng, scale);
      m.b_in = randn(1, config.d_mlp, rng, scale / 2);
      m.W_out = randn(config.d_mlp, d, rng, scale);
      m.b_out = randn(1, d, rng, scale / 2);
      if (config.layernorm == LayerNormMode::Pre) {
        m.ln2_w = MatF::Ones(1, d);
        m.ln2_b = MatF::Zero(1, d);
      }
      w.mlp.push_back(std::move(m));
    }
  }
  if (config.layernorm == LayerNormMode::Pre) {
    w.lnf_w = MatF::Ones(1, d);
    w.lnf_b = MatF::Zero(1, d);
  }
  w.W_U = randn(d, config.vocab_size, rng, scale);
  w.b_U = randn(1, config.vocab_size, rng, scale / 2);
  return w;
}

WeightsF zero_weights(const ModelConfig& config) {
  config.validate();
  const Index d = config.d_model, dh = config.d_head, H = config.n_heads;
  WeightsF w;
  w.W_E = MatF::Zero(config.vocab_size, d);
  w.W_pos = MatF::Zero(config.n_ctx, d);
  for (int l = 0; l < config.n_layers; ++l) {
    AttnWeights<float> a;
    for (int h = 0; h < H; ++h) {
      a.W_Q.push_back(MatF::Zero(d, dh));
      a.W_K.push_back(MatF::Zero(d, dh));
      a.W_V.push_back(MatF::Zero(d, dh));
      a.W_O.push_back(MatF::Zero(dh, d));
    }
    a.b_Q = MatF::Zero(1, H * dh);
    a.b_K = MatF::Zero(1, H * dh);
    a.b_V = MatF::Zero(1, H * dh);
    a.b_O = MatF::Zero(1, d);
    if (config.layernorm == LayerNormMode::Pre) {
      a.ln1_w = MatF::Ones(1, d);
      a.ln1_b = MatF::Zero(1, d);
    }
    w.attn.push_back(std::move(a));
    if (config.has_mlp()) {
      MlpWeights<float> m;
      m.W_in = MatF::Zero(d, config.d_mlp);
      m.b_in = MatF::Zero(1, config.d_mlp);
      m.W_out = MatF::Zero(config.d_mlp, d);
      m.b_out = MatF::Zero(1, d);
      if (config.layernorm == LayerNormMode::Pre) {
        m.ln2_w = MatF::Ones(1, d);
        m.ln2_b = MatF::Zero(1, d);
      }
      w.mlp.push_back(std::move(m));
    }
  }
  if (config.layernorm == LayerNormMode::Pre) {
    w.lnf_w = MatF::Ones(1, d);
    w.lnf_b = MatF::Zero(1, d);
  }
  w.W_U = MatF::Zero(d, config.vocab_size);
  w.b_U = MatF::Zero(1, config.vocab_size);
  return w;
}

PlantedModel planted_relay_model(unsigned seed, const PlantedOptions& options) {
  if (options.n_pairs < 1 || options.seq_len < 2) {
    throw DataError("planted_relay_model: need n_pairs >= 1 and seq_len >= 2");
  }
  PlantedModel pm;
  ModelConfig& c = pm.config;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_head = 8;
  c.d_mlp = 0;
  c.vocab_size = 12;
  c.n_ctx = std::max(8, options.seq_len);
  c.layernorm = LayerNormMode::None;
  c.positional = PositionalMode::Learned;

  std::mt19937 rng(seed);
  pm.weights = random_weights(c, seed + 1, options.noise);
  WeightsF& w = pm.weights;

  // Residual subspaces: S0 = dims 0..3 (token signal), S1 = 4..7 (first
  // relay output), S2 = 8..11 (second relay output).
  const Index sub = 4;
  const Index s0 = 0, s1 = 4, s2 = 8;
  const float sig = static_cast<float>(options.signal);

  // Per-token signal vectors in S0, roughly orthogonal random signs.
  std::uniform_int_distribution<int> coin(0, 1);
  MatF token_sig(c.vocab_size, sub);
  for (Index t = 0; t < c.vocab_size; ++t) {
    for (Index j = 0; j < sub; ++j) token_sig(t, j) = coin(rng) ? 0.5f : -0.5f;
  }
  w.W_E.middleCols(s0, sub) = token_sig * sig;

  // Relay 1: a0.h0 value path reads S0, output path writes S1.
  auto iso = [&](Index rows, Index cols) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    MatF m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng) / std::sqrt(float(rows));
    }
    return m;
  };
  w.attn[0].W_V[0].setZero();
  w.attn[0].W_V[0].middleRows(s0, sub) = iso(sub, c.d_head) * sig;
  w.attn[0].W_O[0].setZero();
  w.attn[0].W_O[0].middleCols(s1, sub) = iso(c.d_head, sub) * sig;

  // Relay 2: a1.h1 reads S1, writes S2.
  w.attn[1].W_V[1].setZero();
  w.attn[1].W_V[1].middleRows(s1, sub) = iso(sub, c.d_head) * sig;
  w.attn[1].W_O[1].setZero();
  w.attn[1].W_O[1].middleCols(s2, sub) = iso(c.d_head, sub) * sig;

  // Unembedding reads the final relay subspace only: the logit of token t is
  // the match between the relayed signal and t's own relayed signature.
  MatF chain = (token_sig * w.attn[0].W_V[0].middleRows(s0, sub) *
                w.attn[0].W_O[0].middleCols(s1, sub) * w.attn[1].W_V[1].middleRows(s1, sub) *
                w.attn[1].W_O[1].middleCols(s2, sub));  // (vocab, sub) signatures in S2
  w.W_U.setZero();
  w.W_U.middleRows(s2, sub) = chain.transpose() * (4.0f / sig);
  w.b_U.setZero();

  // Prompt pairs: content token at position 0, fillers after, answer read at
  // the last position. The corrupt prompt swaps the content token.
  pm.task.name = "planted-relay";
  pm.task.metric.kind = MetricKind::LogitDiff;
  std::uniform_int_distribution<TokenId> tok(0, c.vocab_size - 1);
  for (int p = 0; p < options.n_pairs; ++p) {
    TokenId clean_tok = tok(rng);
    TokenId corrupt_tok = tok(rng);
    while (corrupt_tok == clean_tok) corrupt_tok = tok(rng);
    PromptPair pair;
    pair.clean_tokens.assign(options.seq_len, 0);
    for (int i = 0; i < options.seq_len; ++i) pair.clean_tokens[i] = tok(rng);
    pair.clean_tokens[0] = clean_tok;
    pair.corrupt_tokens = pair.clean_tokens;
    pair.corrupt_tokens[0] = corrupt_tok;
    pair.answer_position = options.seq_len - 1;
    pair.correct_tokens = {clean_tok};
    pair.wrong_tokens = {corrupt_tok};
    pm.task.pairs.push_back(std::move(pair));
  }

  pm.truth.task = pm.task.name;
  pm.truth.edges = {
      parse_edge_id("embed->a0.h0.v"),
      parse_edge_id("a0.h0->a1.h1.v"),
      parse_edge_id("a1.h1->final.in"),
  };
  pm.truth.roles = {
      {"embed", "signal-source"},
      {"a0.h0", "relay-1"},
      {"a1.h1", "relay-2"},
  };
  return pm;
}

}  // namespace circscope
