#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "circscope/patching.hpp"
#include "circscope/scores.hpp"

namespace circscope {

// A prior-work circuit used as labels for ROC evaluation, with an optional
// writer-node role map ("Name Mover", "S-Inhibition", ...). An edge's role is
// the role of its origin node.
struct GroundTruthCircuit {
  std::string task;
  std::vector<Edge> edges;
  std::map<std::string, std::string> roles;  // writer node id -> role
};

GroundTruthCircuit load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const std::filesystem::path& path, const GroundTruthCircuit& truth);

struct RocPoint {
  double parameter = 0;
  double fpr = 0;
  double tpr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by fpr (then tpr)
  double auc = 0;
};

// Sweeps k over the absolute-score ranking (ties by canonical edge id), one
// point per k from 0 to |edges|. The negative set is every non-truth edge in
// the table's universe. AUC by the trapezoid rule.
RocCurve roc_from_ranking(const EdgeScoreTable& table, const GroundTruthCircuit& truth);

// One point per swept circuit plus synthetic (0,0) and (1,1) endpoints. AUC
// integrates the step function through the observed points (running-max tpr
// over fpr); no interpolation is invented between parameters.
RocCurve roc_from_circuit_family(const std::vector<std::pair<double, Circuit>>& circuits,
                                 const GroundTruthCircuit& truth,
                                 const std::vector<Edge>& universe);

// Max over curve points of tpr - fpr.
double youden_j(const RocCurve& curve);

struct HistogramGroup {
  std::string group;  // "in_circuit", "out_of_circuit", or "role:<name>"
  std::vector<Index> counts;
};

struct ScoreHistogram {
  std::vector<double> bin_edges;  // n_bins + 1 ascending edges
  std::vector<HistogramGroup> groups;
};

// Bins SIGNED scores. Groups: in-circuit vs out-of-circuit (these two
// partition all edges), plus one group per role when the truth carries a
// role map. Bins are [lo, hi), last bin closed; out-of-range scores are
// dropped.
ScoreHistogram score_distribution(const EdgeScoreTable& table, const GroundTruthCircuit& truth,
                                  const std::vector<double>& bin_edges);

std::vector<double> uniform_bin_edges(double lo, double hi, Index bins);

// CSV writers. ROC: "parameter,fpr,tpr" rows plus a final "auc,<value>"
// footer row. Histogram: "group,bin_lo,bin_hi,count".
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);
RocCurve read_roc_csv(const std::filesystem::path& path);
void write_histogram_csv(const std::filesystem::path& path, const ScoreHistogram& hist);

struct GridCell {
  double tau_eap = 0;
  double tau_acdc = 0;
  double tpr = 0;
  double fpr = 0;
  double youden_j = 0;
};

// CSV: "tau_eap,tau_acdc,tpr,fpr,youden_j".
void write_grid_csv(const std::filesystem::path& path, const std::vector<GridCell>& cells);

// TPR/FPR of one circuit against the truth over a universe of edges.
std::pair<double, double> tpr_fpr(const std::vector<Edge>& circuit,
                                  const GroundTruthCircuit& truth,
                                  const std::vector<Edge>& universe);

}  // namespace circscope
