#include "circscope/eap.hpp"

namespace circscope {

Circuit top_k_circuit(const EdgeScoreTable& table, Index k) {
  const Index n = static_cast<Index>(table.entries.size());
  if (k < 0 || k > n) {
    throw DataError("top_k_circuit: k = " + std::to_string(k) + " out of range [0, " +
                    std::to_string(n) + "]");
  }
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double sa = table.entries[a].abs_score, sb = table.entries[b].abs_score;
    if (sa != sb) return sa > sb;
    return edge_id(table.entries[a].edge) < edge_id(table.entries[b].edge);
  });
  Circuit c;
  c.method = "top_k";
  c.parameter = static_cast<double>(k);
  c.source_digest = table.digest();
  for (Index i = 0; i < k; ++i) c.edges.push_back(table.entries[order[i]].edge);
  return c;
}

Circuit threshold_circuit(const EdgeScoreTable& table, double tau) {
  if (tau < 0) throw DataError("threshold_circuit: tau must be non-negative");
  Circuit c;
  c.method = "threshold";
  c.parameter = tau;
  c.source_digest = table.digest();
  for (const EdgeScore& s : table.entries) {
    if (s.abs_score > tau) c.edges.push_back(s.edge);
  }
  return c;
}

}  // namespace circscope
