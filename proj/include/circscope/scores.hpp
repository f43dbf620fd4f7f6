#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "circscope/node_id.hpp"

namespace circscope {

// How per-pair edge scores are collapsed into the table:
//   SignedMeanAbsAfter — average signed per-pair scores, then take the
//     absolute value for ranking (the default; preserves cancellation
//     structure in the signed column).
//   MeanOfAbs — average the per-pair absolute values (activation-patching
//     tables and the optional per-pair-absolute mode).
enum class ScoreAggregation { SignedMeanAbsAfter, MeanOfAbs };

std::string to_string(ScoreAggregation agg);

struct EdgeScore {
  Edge edge;
  double signed_score = 0;  // mean over pairs of the signed per-pair score
  double abs_score = 0;     // ranking score per the table's aggregation
};

struct EdgeScoreTable {
  std::vector<EdgeScore> entries;  // canonical edge order
  Index pair_count = 0;
  ScoreAggregation aggregation = ScoreAggregation::SignedMeanAbsAfter;

  const EdgeScore& at(const Edge& e) const;
  bool has(const Edge& e) const;

  // FNV-1a over edge ids and score bytes; identifies the table a circuit
  // was selected from.
  std::uint64_t digest() const;
};

// A selected edge subset with provenance.
struct Circuit {
  std::vector<Edge> edges;
  std::string method;
  double parameter = 0;
  std::uint64_t source_digest = 0;

  bool contains(const Edge& e) const;
};

// CSV: header "edge_id,signed_score,abs_score", one row per edge.
void write_scores_csv(const std::filesystem::path& path, const EdgeScoreTable& table);
std::string scores_csv_string(const EdgeScoreTable& table);
EdgeScoreTable read_scores_csv(const std::filesystem::path& path);

// JSON: {method, parameter, edges: [edge_id]}.
void write_circuit_json(const std::filesystem::path& path, const Circuit& circuit);
Circuit read_circuit_json(const std::filesystem::path& path);

}  // namespace circscope
