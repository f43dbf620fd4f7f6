#pragma once

#include <filesystem>
#include <string>

#include "circscope/common.hpp"

namespace circscope {

enum class LayerNormMode { Pre, None };

// Learned: absolute positions added into the residual stream (a writer node).
// Shortformer: positions added to the query/key inputs only; they never enter
// the residual stream and contribute no graph edges.
enum class PositionalMode { Learned, Shortformer };

struct ModelConfig {
  int n_layers = 0;
  int n_heads = 0;
  int d_model = 0;
  int d_head = 0;
  int d_mlp = 0;  // 0 = attention-only
  int vocab_size = 0;
  int n_ctx = 0;
  LayerNormMode layernorm = LayerNormMode::Pre;
  PositionalMode positional = PositionalMode::Learned;

  bool has_mlp() const { return d_mlp > 0; }
  void validate() const;
};

ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const std::filesystem::path& path, const ModelConfig& config);

std::string to_string(LayerNormMode mode);
std::string to_string(PositionalMode mode);

}  // namespace circscope
