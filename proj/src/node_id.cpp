#include "circscope/node_id.hpp"

#include <charconv>

namespace circscope {

namespace {

int parse_int(std::string_view s, const std::string& context) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value < 0) {
    throw DataError("cannot parse index in node id '" + context + "'");
  }
  return value;
}

}  // namespace

bool is_writer(NodeKind kind) {
  switch (kind) {
    case NodeKind::TokenEmbed:
    case NodeKind::PosEmbed:
    case NodeKind::HeadOut:
    case NodeKind::MlpOut:
      return true;
    default:
      return false;
  }
}

bool is_reader(NodeKind kind) { return !is_writer(kind); }

std::tuple<int, int, int, int> node_order_key(const NodeId& id) {
  // (layer, block, head, port): embeddings sort before layer 0, final.in
  // after everything; within a layer the MLP follows the attention block.
  switch (id.kind) {
    case NodeKind::TokenEmbed:
      return {-1, 0, 0, 0};
    case NodeKind::PosEmbed:
      return {-1, 0, 0, 1};
    case NodeKind::HeadQ:
      return {id.layer, 0, id.head, 0};
    case NodeKind::HeadK:
      return {id.layer, 0, id.head, 1};
    case NodeKind::HeadV:
      return {id.layer, 0, id.head, 2};
    case NodeKind::HeadOut:
      return {id.layer, 0, id.head, 3};
    case NodeKind::MlpIn:
      return {id.layer, 1, 0, 0};
    case NodeKind::MlpOut:
      return {id.layer, 1, 0, 1};
    case NodeKind::FinalIn:
      return {1 << 30, 0, 0, 0};
  }
  return {0, 0, 0, 0};
}

bool node_less(const NodeId& a, const NodeId& b) { return node_order_key(a) < node_order_key(b); }

std::string to_string(const NodeId& id) {
  switch (id.kind) {
    case NodeKind::TokenEmbed:
      return "embed";
    case NodeKind::PosEmbed:
      return "pos";
    case NodeKind::HeadOut:
      return "a" + std::to_string(id.layer) + ".h" + std::to_string(id.head);
    case NodeKind::MlpOut:
      return "m" + std::to_string(id.layer);
    case NodeKind::HeadQ:
      return "a" + std::to_string(id.layer) + ".h" + std::to_string(id.head) + ".q";
    case NodeKind::HeadK:
      return "a" + std::to_string(id.layer) + ".h" + std::to_string(id.head) + ".k";
    case NodeKind::HeadV:
      return "a" + std::to_string(id.layer) + ".h" + std::to_string(id.head) + ".v";
    case NodeKind::MlpIn:
      return "m" + std::to_string(id.layer) + ".in";
    case NodeKind::FinalIn:
      return "final.in";
  }
  throw DataError("unknown node kind");
}

NodeId parse_node_id(const std::string& text) {
  if (text == "embed") return {NodeKind::TokenEmbed, -1, -1};
  if (text == "pos") return {NodeKind::PosEmbed, -1, -1};
  if (text == "final.in") return {NodeKind::FinalIn, -1, -1};

  if (text.size() > 1 && text[0] == 'm') {
    // "m{l}" or "m{l}.in"
    const auto dot = text.find('.');
    if (dot == std::string::npos) {
      return {NodeKind::MlpOut, parse_int(std::string_view(text).substr(1), text), -1};
    }
    if (text.substr(dot) != ".in") throw DataError("cannot parse node id '" + text + "'");
    return {NodeKind::MlpIn, parse_int(std::string_view(text).substr(1, dot - 1), text), -1};
  }

  if (text.size() > 1 && text[0] == 'a') {
    // "a{l}.h{h}" or "a{l}.h{h}.{q|k|v}"
    const auto dot1 = text.find('.');
    if (dot1 == std::string::npos || dot1 + 1 >= text.size() || text[dot1 + 1] != 'h') {
      throw DataError("cannot parse node id '" + text + "'");
    }
    const int layer = parse_int(std::string_view(text).substr(1, dot1 - 1), text);
    const auto dot2 = text.find('.', dot1 + 1);
    if (dot2 == std::string::npos) {
      return {NodeKind::HeadOut, layer, parse_int(std::string_view(text).substr(dot1 + 2), text)};
    }
    const int head = parse_int(std::string_view(text).substr(dot1 + 2, dot2 - dot1 - 2), text);
    const std::string port = text.substr(dot2 + 1);
    if (port == "q") return {NodeKind::HeadQ, layer, head};
    if (port == "k") return {NodeKind::HeadK, layer, head};
    if (port == "v") return {NodeKind::HeadV, layer, head};
    throw DataError("cannot parse node id '" + text + "'");
  }
  throw DataError("cannot parse node id '" + text + "'");
}

std::string writer_hook(const NodeId& id) {
  if (!is_writer(id.kind)) throw DataError("writer_hook on reader node '" + to_string(id) + "'");
  return to_string(id) + ".out";
}

std::string reader_hook(const NodeId& id) {
  switch (id.kind) {
    case NodeKind::HeadQ:
    case NodeKind::HeadK:
    case NodeKind::HeadV:
      return to_string(id) + "_input";
    case NodeKind::MlpIn:
    case NodeKind::FinalIn:
      return to_string(id);
    default:
      throw DataError("reader_hook on writer node '" + to_string(id) + "'");
  }
}

HookName parse_hook_name(const std::string& text) {
  if (text == "final.in") return {parse_node_id(text), false};
  if (text.size() > 6 && text.compare(text.size() - 6, 6, "_input") == 0) {
    NodeId id = parse_node_id(text.substr(0, text.size() - 6));
    if (id.kind != NodeKind::HeadQ && id.kind != NodeKind::HeadK && id.kind != NodeKind::HeadV) {
      throw DataError("cannot parse hook name '" + text + "'");
    }
    return {id, false};
  }
  if (text.size() > 4 && text.compare(text.size() - 4, 4, ".out") == 0) {
    NodeId id = parse_node_id(text.substr(0, text.size() - 4));
    if (!is_writer(id.kind)) throw DataError("cannot parse hook name '" + text + "'");
    return {id, true};
  }
  if (text.size() > 3 && text.compare(text.size() - 3, 3, ".in") == 0) {
    NodeId id = parse_node_id(text);
    if (id.kind != NodeKind::MlpIn) throw DataError("cannot parse hook name '" + text + "'");
    return {id, false};
  }
  throw DataError("cannot parse hook name '" + text + "'");
}

std::string edge_id(const Edge& e) { return to_string(e.src) + "->" + to_string(e.dst); }

Edge parse_edge_id(const std::string& text) {
  const auto arrow = text.find("->");
  if (arrow == std::string::npos) throw DataError("edge id '" + text + "' missing '->'");
  Edge e;
  e.src = parse_node_id(text.substr(0, arrow));
  e.dst = parse_node_id(text.substr(arrow + 2));
  if (!is_writer(e.src.kind)) {
    throw DataError("edge '" + text + "': source must be a writer node");
  }
  if (!is_reader(e.dst.kind)) {
    throw DataError("edge '" + text + "': destination must be a reader node");
  }
  return e;
}

}  // namespace circscope
