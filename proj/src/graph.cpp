#include "circscope/graph.hpp"

namespace circscope {

int writer_stage(const NodeId& writer, const ModelConfig&) {
  switch (writer.kind) {
    case NodeKind::TokenEmbed:
    case NodeKind::PosEmbed:
      return 0;
    case NodeKind::HeadOut:
      return 2 * writer.layer + 1;
    case NodeKind::MlpOut:
      return 2 * writer.layer + 2;
    default:
      throw DataError("writer_stage on reader node");
  }
}

int reader_stage_cap(const NodeId& reader, const ModelConfig& config) {
  switch (reader.kind) {
    case NodeKind::HeadQ:
    case NodeKind::HeadK:
    case NodeKind::HeadV:
      return 2 * reader.layer;  // strictly before this layer's attention write
    case NodeKind::MlpIn:
      return 2 * reader.layer + 1;  // same-layer head outputs feed the MLP
    case NodeKind::FinalIn:
      return 2 * config.n_layers;
    default:
      throw DataError("reader_stage_cap on writer node");
  }
}

bool DecomposedGraph::valid_edge(const NodeId& src, const NodeId& dst) const {
  if (!is_writer(src.kind) || !is_reader(dst.kind)) return false;
  if (src.kind == NodeKind::PosEmbed && config.positional == PositionalMode::Shortformer) {
    return false;  // pos never enters the residual stream in shortformer mode
  }
  return writer_stage(src, config) <= reader_stage_cap(dst, config);
}

bool DecomposedGraph::has_edge(const Edge& e) const {
  return edge_by_id_.count(edge_id(e)) != 0;
}

Index DecomposedGraph::edge_index(const Edge& e) const {
  auto it = edge_by_id_.find(edge_id(e));
  if (it == edge_by_id_.end()) throw DataError("edge '" + edge_id(e) + "' not in graph");
  return it->second;
}

Edge DecomposedGraph::edge_from_id(const std::string& id) const {
  Edge e = parse_edge_id(id);
  edge_index(e);  // validates membership
  return e;
}

Index DecomposedGraph::writer_index(const NodeId& w) const {
  auto it = writer_by_id_.find(to_string(w));
  if (it == writer_by_id_.end()) throw DataError("writer '" + to_string(w) + "' not in graph");
  return it->second;
}

Index DecomposedGraph::reader_index(const NodeId& r) const {
  auto it = reader_by_id_.find(to_string(r));
  if (it == reader_by_id_.end()) throw DataError("reader '" + to_string(r) + "' not in graph");
  return it->second;
}

DecomposedGraph build_graph(const ModelConfig& config) {
  config.validate();
  DecomposedGraph g;
  g.config = config;

  g.writers.push_back({NodeKind::TokenEmbed, -1, -1});
  if (config.positional == PositionalMode::Learned) {
    g.writers.push_back({NodeKind::PosEmbed, -1, -1});
  }
  for (int l = 0; l < config.n_layers; ++l) {
    for (int h = 0; h < config.n_heads; ++h) g.writers.push_back({NodeKind::HeadOut, l, h});
    if (config.has_mlp()) g.writers.push_back({NodeKind::MlpOut, l, -1});
  }

  for (int l = 0; l < config.n_layers; ++l) {
    for (int h = 0; h < config.n_heads; ++h) {
      g.readers.push_back({NodeKind::HeadQ, l, h});
      g.readers.push_back({NodeKind::HeadK, l, h});
      g.readers.push_back({NodeKind::HeadV, l, h});
    }
    if (config.has_mlp()) g.readers.push_back({NodeKind::MlpIn, l, -1});
  }
  g.readers.push_back({NodeKind::FinalIn, -1, -1});

  for (Index i = 0; i < static_cast<Index>(g.writers.size()); ++i) {
    g.writer_by_id_.emplace(to_string(g.writers[i]), i);
  }
  for (Index i = 0; i < static_cast<Index>(g.readers.size()); ++i) {
    g.reader_by_id_.emplace(to_string(g.readers[i]), i);
  }

  for (const NodeId& r : g.readers) {
    for (const NodeId& w : g.writers) {
      if (g.valid_edge(w, r)) g.edges.push_back({w, r});
    }
  }
  for (Index i = 0; i < static_cast<Index>(g.edges.size()); ++i) {
    g.edge_by_id_.emplace(edge_id(g.edges[i]), i);
  }
  return g;
}

}  // namespace circscope
