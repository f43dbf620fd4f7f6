#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "circscope/model_config.hpp"
#include "circscope/node_id.hpp"

namespace circscope {

// The residual stream advances in stages: embeddings (stage 0), then per
// layer the attention write (2l+1) and the MLP write (2l+2). A reader sees
// every writer whose stage does not exceed its cap.
int writer_stage(const NodeId& writer, const ModelConfig& config);
int reader_stage_cap(const NodeId& reader, const ModelConfig& config);

// Writer/reader enumeration and the full valid edge list of a decomposed
// transformer. Immutable after construction and shareable across runs.
struct DecomposedGraph {
  ModelConfig config;
  std::vector<NodeId> writers;  // canonical order
  std::vector<NodeId> readers;  // canonical order
  std::vector<Edge> edges;      // reader-major, writer-minor canonical order

  bool valid_edge(const NodeId& src, const NodeId& dst) const;
  bool has_edge(const Edge& e) const;

  Index edge_index(const Edge& e) const;          // throws DataError if absent
  Edge edge_from_id(const std::string& id) const; // parses and validates

  Index writer_index(const NodeId& w) const;
  Index reader_index(const NodeId& r) const;

 private:
  friend DecomposedGraph build_graph(const ModelConfig&);
  std::unordered_map<std::string, Index> edge_by_id_;
  std::unordered_map<std::string, Index> writer_by_id_;
  std::unordered_map<std::string, Index> reader_by_id_;
};

DecomposedGraph build_graph(const ModelConfig& config);

}  // namespace circscope
