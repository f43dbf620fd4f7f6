#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "circscope/model_config.hpp"
#include "circscope/tensor.hpp"
#include "circscope/weights.hpp"

namespace circscope {

// Weight container layout:
//   bytes 0..8   magic "CIRCWT01"
//   bytes 8..16  uint64 LE header length
//   header       UTF-8 JSON array of {name, shape, dtype:"f32", offset}
//   blob         raw little-endian f32 data; offset is a byte offset here
inline constexpr char kWeightMagic[8] = {'C', 'I', 'R', 'C', 'W', 'T', '0', '1'};

std::map<std::string, TensorF> read_weight_container(const std::filesystem::path& path);
void write_weight_container(const std::filesystem::path& path,
                            const std::map<std::string, TensorF>& tensors);

// Manifest-checked load/save for a specific model config.
WeightsF load_weights(const std::filesystem::path& path, const ModelConfig& config);
void save_weights(const std::filesystem::path& path, const ModelConfig& config,
                  const WeightsF& weights);

}  // namespace circscope
