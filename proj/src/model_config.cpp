#include "circscope/model_config.hpp"

#include <fstream>

#include <json.hpp>

namespace circscope {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw DataError(std::string("model config: ") + name + " must be positive");
  };
  if (n_layers < 0) throw DataError("model config: n_layers must be non-negative");
  if (n_layers > 0) {
    positive(n_heads, "n_heads");
    positive(d_head, "d_head");
  }
  positive(d_model, "d_model");
  positive(vocab_size, "vocab_size");
  positive(n_ctx, "n_ctx");
  if (d_mlp < 0) throw DataError("model config: d_mlp must be non-negative");
}

std::string to_string(LayerNormMode mode) {
  return mode == LayerNormMode::Pre ? "pre" : "none";
}

std::string to_string(PositionalMode mode) {
  return mode == PositionalMode::Learned ? "learned" : "shortformer";
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model config '" + path.string() + "': " + e.what());
  }
  ModelConfig c;
  try {
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_head = j.at("d_head").get<int>();
    c.d_mlp = j.at("d_mlp").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.n_ctx = j.at("n_ctx").get<int>();
    const std::string ln = j.at("layernorm").get<std::string>();
    if (ln == "pre") {
      c.layernorm = LayerNormMode::Pre;
    } else if (ln == "none") {
      c.layernorm = LayerNormMode::None;
    } else {
      throw DataError("model config: layernorm must be 'pre' or 'none'");
    }
    const std::string pos = j.at("positional").get<std::string>();
    if (pos == "learned" || pos == "learned-absolute") {
      c.positional = PositionalMode::Learned;
    } else if (pos == "shortformer") {
      c.positional = PositionalMode::Shortformer;
    } else {
      throw DataError("model config: positional must be 'learned' or 'shortformer'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model config '" + path.string() + "': " + e.what());
  }
  c.validate();
  return c;
}

void save_model_config(const std::filesystem::path& path, const ModelConfig& config) {
  config.validate();
  nlohmann::json j{
      {"n_layers", config.n_layers}, {"n_heads", config.n_heads},
      {"d_model", config.d_model},   {"d_head", config.d_head},
      {"d_mlp", config.d_mlp},       {"vocab_size", config.vocab_size},
      {"n_ctx", config.n_ctx},       {"layernorm", to_string(config.layernorm)},
      {"positional", to_string(config.positional)},
  };
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model config '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace circscope
