#pragma once

#include <string>
#include <tuple>

#include "circscope/common.hpp"

namespace circscope {

// Nodes of the decomposed residual-stream graph. Writers add their output
// into the residual stream; readers consume an accumulated copy of it.
enum class NodeKind {
  TokenEmbed,  // writer "embed"
  PosEmbed,    // writer "pos"
  HeadOut,     // writer "a{l}.h{h}"
  MlpOut,      // writer "m{l}"
  HeadQ,       // reader "a{l}.h{h}.q"
  HeadK,       // reader "a{l}.h{h}.k"
  HeadV,       // reader "a{l}.h{h}.v"
  MlpIn,       // reader "m{l}.in"
  FinalIn,     // reader "final.in"
};

struct NodeId {
  NodeKind kind = NodeKind::TokenEmbed;
  int layer = -1;
  int head = -1;

  bool operator==(const NodeId& o) const {
    return kind == o.kind && layer == o.layer && head == o.head;
  }
  bool operator!=(const NodeId& o) const { return !(*this == o); }
};

bool is_writer(NodeKind kind);
bool is_reader(NodeKind kind);

// Canonical total order: embeddings first, then by layer with the MLP after
// the attention block, then head index, then port q < k < v < out.
std::tuple<int, int, int, int> node_order_key(const NodeId& id);

bool node_less(const NodeId& a, const NodeId& b);

std::string to_string(const NodeId& id);
NodeId parse_node_id(const std::string& text);

// Tape hook names. Writers expose "<node>.out"; q/k/v readers expose
// "<node>_input"; "m{l}.in" and "final.in" are their own hook names.
std::string writer_hook(const NodeId& id);
std::string reader_hook(const NodeId& id);

struct HookName {
  NodeId node;
  bool is_writer_output = false;  // "<writer>.out" vs a reader input hook
};

// Inverse of writer_hook/reader_hook; throws DataError on anything else.
HookName parse_hook_name(const std::string& text);

struct Edge {
  NodeId src;  // writer
  NodeId dst;  // reader

  bool operator==(const Edge& o) const { return src == o.src && dst == o.dst; }
  bool operator!=(const Edge& o) const { return !(*this == o); }
};

std::string edge_id(const Edge& e);
Edge parse_edge_id(const std::string& text);

}  // namespace circscope
