#pragma once

#include "circscope/eval.hpp"
#include "circscope/model_config.hpp"
#include "circscope/tasks.hpp"
#include "circscope/weights.hpp"

namespace circscope {

// Gaussian weights at the given scale; layernorm scale/shift at identity.
WeightsF random_weights(const ModelConfig& config, unsigned seed, double scale = 0.05);

WeightsF zero_weights(const ModelConfig& config);

struct PlantedOptions {
  int n_pairs = 4;
  int seq_len = 4;
  double noise = 0.02;   // scale of all off-circuit weights
  double signal = 1.0;   // scale of the planted relay path
};

// A model with a known circuit built in: the task token's embedding signal is
// relayed a0.h0 -> a1.h1 through disjoint subspaces of the residual stream,
// and the unembedding reads only the relay output. Every other weight is
// low-scale noise, so the three relay edges carry (almost) all of the task
// signal and serve as ground truth for recovery experiments.
struct PlantedModel {
  ModelConfig config;
  WeightsF weights;
  TaskDataset task;
  GroundTruthCircuit truth;
};

PlantedModel planted_relay_model(unsigned seed, const PlantedOptions& options = {});

}  // namespace circscope
