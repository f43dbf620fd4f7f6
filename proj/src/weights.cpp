#include "circscope/weights.hpp"

namespace circscope {

namespace {

MatF matrix_for(const std::map<std::string, TensorF>& tensors, const std::string& name) {
  return tensors.at(name).to_matrix();
}

}  // namespace

std::vector<TensorSpec> weight_manifest(const ModelConfig& config) {
  config.validate();
  const Index d = config.d_model, dh = config.d_head, H = config.n_heads;
  std::vector<TensorSpec> m;
  m.push_back({"embed.W_E", {config.vocab_size, d}});
  m.push_back({"pos.W_pos", {config.n_ctx, d}});
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string al = "a" + std::to_string(l) + ".";
    if (config.layernorm == LayerNormMode::Pre) {
      m.push_back({"ln1." + std::to_string(l) + ".w", {d}});
      m.push_back({"ln1." + std::to_string(l) + ".b", {d}});
    }
    for (int h = 0; h < H; ++h) {
      const std::string ah = al + "h" + std::to_string(h) + ".";
      m.push_back({ah + "W_Q", {d, dh}});
      m.push_back({ah + "W_K", {d, dh}});
      m.push_back({ah + "W_V", {d, dh}});
      m.push_back({ah + "W_O", {dh, d}});
    }
    m.push_back({al + "b_Q", {H * dh}});
    m.push_back({al + "b_K", {H * dh}});
    m.push_back({al + "b_V", {H * dh}});
    m.push_back({al + "b_O", {d}});
    if (config.has_mlp()) {
      const std::string ml = "m" + std::to_string(l) + ".";
      if (config.layernorm == LayerNormMode::Pre) {
        m.push_back({"ln2." + std::to_string(l) + ".w", {d}});
        m.push_back({"ln2." + std::to_string(l) + ".b", {d}});
      }
      m.push_back({ml + "W_in", {d, config.d_mlp}});
      m.push_back({ml + "b_in", {config.d_mlp}});
      m.push_back({ml + "W_out", {config.d_mlp, d}});
      m.push_back({ml + "b_out", {d}});
    }
  }
  if (config.layernorm == LayerNormMode::Pre) {
    m.push_back({"lnf.w", {d}});
    m.push_back({"lnf.b", {d}});
  }
  m.push_back({"unembed.W_U", {d, config.vocab_size}});
  m.push_back({"unembed.b_U", {config.vocab_size}});
  return m;
}

std::map<std::string, TensorF> tensors_from_weights(const ModelConfig& config,
                                                    const WeightsF& w) {
  std::map<std::string, TensorF> out;
  auto put_mat = [&out](const std::string& name, const MatF& m) {
    out.emplace(name, TensorF::from_matrix(m, false));
  };
  auto put_vec = [&out](const std::string& name, const MatF& m) {
    out.emplace(name, TensorF::from_matrix(m, true));
  };
  put_mat("embed.W_E", w.W_E);
  put_mat("pos.W_pos", w.W_pos);
  for (int l = 0; l < config.n_layers; ++l) {
    const auto& a = w.attn[l];
    const std::string al = "a" + std::to_string(l) + ".";
    if (config.layernorm == LayerNormMode::Pre) {
      put_vec("ln1." + std::to_string(l) + ".w", a.ln1_w);
      put_vec("ln1." + std::to_string(l) + ".b", a.ln1_b);
    }
    for (int h = 0; h < config.n_heads; ++h) {
      const std::string ah = al + "h" + std::to_string(h) + ".";
      put_mat(ah + "W_Q", a.W_Q[h]);
      put_mat(ah + "W_K", a.W_K[h]);
      put_mat(ah + "W_V", a.W_V[h]);
      put_mat(ah + "W_O", a.W_O[h]);
    }
    put_vec(al + "b_Q", a.b_Q);
    put_vec(al + "b_K", a.b_K);
    put_vec(al + "b_V", a.b_V);
    put_vec(al + "b_O", a.b_O);
    if (config.has_mlp()) {
      const auto& mm = w.mlp[l];
      const std::string ml = "m" + std::to_string(l) + ".";
      if (config.layernorm == LayerNormMode::Pre) {
        put_vec("ln2." + std::to_string(l) + ".w", mm.ln2_w);
        put_vec("ln2." + std::to_string(l) + ".b", mm.ln2_b);
      }
      put_mat(ml + "W_in", mm.W_in);
      put_vec(ml + "b_in", mm.b_in);
      put_mat(ml + "W_out", mm.W_out);
      put_vec(ml + "b_out", mm.b_out);
    }
  }
  if (config.layernorm == LayerNormMode::Pre) {
    put_vec("lnf.w", w.lnf_w);
    put_vec("lnf.b", w.lnf_b);
  }
  put_mat("unembed.W_U", w.W_U);
  put_vec("unembed.b_U", w.b_U);
  return out;
}

WeightsF weights_from_tensors(const ModelConfig& config,
                              const std::map<std::string, TensorF>& tensors) {
  const auto manifest = weight_manifest(config);

  for (const auto& spec : manifest) {
    auto it = tensors.find(spec.name);
    if (it == tensors.end()) {
      throw DataError("weight container: missing tensor '" + spec.name + "'");
    }
    it->second.validate(spec.name);
    if (it->second.shape != spec.shape) {
      std::string want, got;
      for (Index v : spec.shape) want += (want.empty() ? "" : ", ") + std::to_string(v);
      for (Index v : it->second.shape) got += (got.empty() ? "" : ", ") + std::to_string(v);
      throw DataError("weight container: tensor '" + spec.name + "' has shape (" + got +
                      "), expected (" + want + ")");
    }
  }
  if (tensors.size() != manifest.size()) {
    for (const auto& [name, t] : tensors) {
      bool known = false;
      for (const auto& spec : manifest) {
        if (spec.name == name) {
          known = true;
          break;
        }
      }
      if (!known) throw DataError("weight container: unexpected tensor '" + name + "'");
    }
  }

  WeightsF w;
  w.W_E = matrix_for(tensors, "embed.W_E");
  w.W_pos = matrix_for(tensors, "pos.W_pos");
  for (int l = 0; l < config.n_layers; ++l) {
    AttnWeights<float> a;
    const std::string al = "a" + std::to_string(l) + ".";
    if (config.layernorm == LayerNormMode::Pre) {
      a.ln1_w = matrix_for(tensors, "ln1." + std::to_string(l) + ".w");
      a.ln1_b = matrix_for(tensors, "ln1." + std::to_string(l) + ".b");
    }
    for (int h = 0; h < config.n_heads; ++h) {
      const std::string ah = al + "h" + std::to_string(h) + ".";
      a.W_Q.push_back(matrix_for(tensors, ah + "W_Q"));
      a.W_K.push_back(matrix_for(tensors, ah + "W_K"));
      a.W_V.push_back(matrix_for(tensors, ah + "W_V"));
      a.W_O.push_back(matrix_for(tensors, ah + "W_O"));
    }
    a.b_Q = matrix_for(tensors, al + "b_Q");
    a.b_K = matrix_for(tensors, al + "b_K");
    a.b_V = matrix_for(tensors, al + "b_V");
    a.b_O = matrix_for(tensors, al + "b_O");
    w.attn.push_back(std::move(a));
    if (config.has_mlp()) {
      MlpWeights<float> mm;
      const std::string ml = "m" + std::to_string(l) + ".";
      if (config.layernorm == LayerNormMode::Pre) {
        mm.ln2_w = matrix_for(tensors, "ln2." + std::to_string(l) + ".w");
        mm.ln2_b = matrix_for(tensors, "ln2." + std::to_string(l) + ".b");
      }
      mm.W_in = matrix_for(tensors, ml + "W_in");
      mm.b_in = matrix_for(tensors, ml + "b_in");
      mm.W_out = matrix_for(tensors, ml + "W_out");
      mm.b_out = matrix_for(tensors, ml + "b_out");
      w.mlp.push_back(std::move(mm));
    }
  }
  if (config.layernorm == LayerNormMode::Pre) {
    w.lnf_w = matrix_for(tensors, "lnf.w");
    w.lnf_b = matrix_for(tensors, "lnf.b");
  }
  w.W_U = matrix_for(tensors, "unembed.W_U");
  w.b_U = matrix_for(tensors, "unembed.b_U");
  return w;
}

}  // namespace circscope
