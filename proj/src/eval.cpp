#include "circscope/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "circscope/csv.hpp"

namespace circscope {

namespace {

std::set<std::string> id_set(const std::vector<Edge>& edges) {
  std::set<std::string> out;
  for (const Edge& e : edges) out.insert(edge_id(e));
  return out;
}

double trapezoid_auc(const std::vector<RocPoint>& points) {
  double auc = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    auc += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  }
  return auc;
}

}  // namespace

GroundTruthCircuit load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ground truth '" + path.string() + "': " + e.what());
  }
  GroundTruthCircuit t;
  try {
    t.task = j.at("task").get<std::string>();
    for (const auto& id : j.at("edges")) t.edges.push_back(parse_edge_id(id.get<std::string>()));
    if (j.contains("roles")) {
      for (const auto& [node, role] : j.at("roles").items()) {
        parse_node_id(node);  // must be well-formed
        t.roles[node] = role.get<std::string>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ground truth '" + path.string() + "': " + e.what());
  }
  return t;
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruthCircuit& truth) {
  nlohmann::json j;
  j["task"] = truth.task;
  j["edges"] = nlohmann::json::array();
  for (const Edge& e : truth.edges) j["edges"].push_back(edge_id(e));
  j["roles"] = nlohmann::json::object();
  for (const auto& [node, role] : truth.roles) j["roles"][node] = role;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ground truth '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

RocCurve roc_from_ranking(const EdgeScoreTable& table, const GroundTruthCircuit& truth) {
  const Index n = static_cast<Index>(table.entries.size());
  if (n == 0) throw DataError("roc_from_ranking: empty score table");
  if (truth.edges.empty()) throw DataError("roc_from_ranking: empty ground-truth circuit");

  const std::set<std::string> universe = [&] {
    std::set<std::string> u;
    for (const auto& s : table.entries) u.insert(edge_id(s.edge));
    return u;
  }();
  const std::set<std::string> truth_ids = id_set(truth.edges);
  for (const std::string& id : truth_ids) {
    if (!universe.count(id)) {
      throw DataError("ground truth references unknown edge '" + id + "'");
    }
  }
  const double n_pos = static_cast<double>(truth_ids.size());
  const double n_neg = static_cast<double>(universe.size() - truth_ids.size());

  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double sa = table.entries[a].abs_score, sb = table.entries[b].abs_score;
    if (sa != sb) return sa > sb;
    return edge_id(table.entries[a].edge) < edge_id(table.entries[b].edge);
  });

  RocCurve curve;
  double tp = 0, fp = 0;
  curve.points.push_back({0, 0, 0});
  for (Index k = 0; k < n; ++k) {
    if (truth_ids.count(edge_id(table.entries[order[k]].edge))) {
      tp += 1;
    } else {
      fp += 1;
    }
    curve.points.push_back({static_cast<double>(k + 1), n_neg > 0 ? fp / n_neg : 1.0,
                            tp / n_pos});
  }
  std::stable_sort(curve.points.begin(), curve.points.end(), [](const RocPoint& a, const RocPoint& b) {
    if (a.fpr != b.fpr) return a.fpr < b.fpr;
    return a.tpr < b.tpr;
  });
  curve.auc = trapezoid_auc(curve.points);
  return curve;
}

std::pair<double, double> tpr_fpr(const std::vector<Edge>& circuit,
                                  const GroundTruthCircuit& truth,
                                  const std::vector<Edge>& universe) {
  if (truth.edges.empty()) throw DataError("tpr_fpr: empty ground-truth circuit");
  const std::set<std::string> universe_ids = id_set(universe);
  const std::set<std::string> truth_ids = id_set(truth.edges);
  for (const std::string& id : truth_ids) {
    if (!universe_ids.count(id)) {
      throw DataError("ground truth references unknown edge '" + id + "'");
    }
  }
  double tp = 0, fp = 0;
  for (const Edge& e : circuit) {
    const std::string id = edge_id(e);
    if (!universe_ids.count(id)) {
      throw DataError("circuit references unknown edge '" + id + "'");
    }
    if (truth_ids.count(id)) {
      tp += 1;
    } else {
      fp += 1;
    }
  }
  const double n_pos = static_cast<double>(truth_ids.size());
  const double n_neg = static_cast<double>(universe_ids.size() - truth_ids.size());
  return {tp / n_pos, n_neg > 0 ? fp / n_neg : 0.0};
}

RocCurve roc_from_circuit_family(const std::vector<std::pair<double, Circuit>>& circuits,
                                 const GroundTruthCircuit& truth,
                                 const std::vector<Edge>& universe) {
  if (circuits.empty()) throw DataError("roc_from_circuit_family: no circuits");
  RocCurve curve;
  curve.points.push_back({0, 0, 0});
  curve.points.push_back({0, 1, 1});
  for (const auto& [param, circuit] : circuits) {
    const auto [tpr, fpr] = tpr_fpr(circuit.edges, truth, universe);
    curve.points.push_back({param, fpr, tpr});
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const RocPoint& a, const RocPoint& b) {
                     if (a.fpr != b.fpr) return a.fpr < b.fpr;
                     return a.tpr < b.tpr;
                   });
  // Step integration of the running-max tpr: observed operating points only,
  // nothing interpolated between parameters.
  double auc = 0, best_tpr = 0;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    best_tpr = std::max(best_tpr, curve.points[i].tpr);
    auc += best_tpr * (curve.points[i + 1].fpr - curve.points[i].fpr);
  }
  curve.auc = auc;
  return curve;
}

double youden_j(const RocCurve& curve) {
  if (curve.points.empty()) throw DataError("youden_j: empty curve");
  double best = -1;
  for (const RocPoint& p : curve.points) best = std::max(best, p.tpr - p.fpr);
  return best;
}

std::vector<double> uniform_bin_edges(double lo, double hi, Index bins) {
  if (bins < 1) throw DataError("uniform_bin_edges: need at least one bin");
  if (!(hi > lo)) throw DataError("uniform_bin_edges: hi must exceed lo");
  std::vector<double> edges;
  for (Index i = 0; i <= bins; ++i) {
    edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  }
  return edges;
}

ScoreHistogram score_distribution(const EdgeScoreTable& table, const GroundTruthCircuit& truth,
                                  const std::vector<double>& bin_edges) {
  if (bin_edges.size() < 2) throw DataError("score_distribution: need at least one bin");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) {
      throw DataError("score_distribution: bin edges must be strictly increasing");
    }
  }
  const Index n_bins = static_cast<Index>(bin_edges.size()) - 1;
  const std::set<std::string> truth_ids = id_set(truth.edges);

  ScoreHistogram hist;
  hist.bin_edges = bin_edges;
  hist.groups.push_back({"in_circuit", std::vector<Index>(n_bins, 0)});
  hist.groups.push_back({"out_of_circuit", std::vector<Index>(n_bins, 0)});
  std::map<std::string, Index> role_group;  // role -> group index
  for (const auto& [node, role] : truth.roles) {
    const std::string name = "role:" + role;
    if (!role_group.count(name)) {
      role_group[name] = static_cast<Index>(hist.groups.size());
      hist.groups.push_back({name, std::vector<Index>(n_bins, 0)});
    }
  }

  auto bin_of = [&](double v) -> Index {
    if (v < bin_edges.front() || v > bin_edges.back()) return -1;
    if (v == bin_edges.back()) return n_bins - 1;  // last bin closed
    Index lo = 0, hi = n_bins;
    while (lo + 1 < hi) {
      const Index mid = (lo + hi) / 2;
      if (v >= bin_edges[mid]) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  };

  for (const EdgeScore& s : table.entries) {
    const Index b = bin_of(s.signed_score);
    if (b < 0) continue;
    const bool in_circuit = truth_ids.count(edge_id(s.edge)) != 0;
    hist.groups[in_circuit ? 0 : 1].counts[b] += 1;
    // Role stratification covers the circuit's edges, keyed by origin node.
    if (in_circuit) {
      auto role_it = truth.roles.find(to_string(s.edge.src));
      if (role_it != truth.roles.end()) {
        hist.groups[role_group.at("role:" + role_it->second)].counts[b] += 1;
      }
    }
  }
  return hist;
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ROC CSV '" + path.string() + "'");
  out << "parameter,fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out << csv_double(p.parameter) << "," << csv_double(p.fpr) << "," << csv_double(p.tpr)
        << "\n";
  }
  out << "auc," << csv_double(curve.auc) << "\n";
}

RocCurve read_roc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ROC CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "parameter,fpr,tpr") {
    throw DataError("ROC CSV '" + path.string() + "': bad header");
  }
  RocCurve curve;
  bool saw_auc = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("auc,", 0) == 0) {
      curve.auc = std::stod(line.substr(4));
      saw_auc = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw DataError("ROC CSV '" + path.string() + "': bad row '" + line + "'");
    }
    RocPoint p;
    p.parameter = std::stod(line.substr(0, c1));
    p.fpr = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    p.tpr = std::stod(line.substr(c2 + 1));
    curve.points.push_back(p);
  }
  if (!saw_auc) throw DataError("ROC CSV '" + path.string() + "': missing auc footer");
  return curve;
}

void write_histogram_csv(const std::filesystem::path& path, const ScoreHistogram& hist) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write histogram CSV '" + path.string() + "'");
  out << "group,bin_lo,bin_hi,count\n";
  for (const HistogramGroup& g : hist.groups) {
    for (std::size_t b = 0; b + 1 < hist.bin_edges.size(); ++b) {
      out << g.group << "," << csv_double(hist.bin_edges[b]) << ","
          << csv_double(hist.bin_edges[b + 1]) << "," << g.counts[b] << "\n";
    }
  }
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridCell>& cells) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write grid CSV '" + path.string() + "'");
  out << "tau_eap,tau_acdc,tpr,fpr,youden_j\n";
  for (const GridCell& c : cells) {
    out << csv_double(c.tau_eap) << "," << csv_double(c.tau_acdc) << "," << csv_double(c.tpr)
        << "," << csv_double(c.fpr) << "," << csv_double(c.youden_j) << "\n";
  }
}

std::vector<double> default_lambda_grid(int n) {
  if (n < 1) throw DataError("lambda grid needs at least one point");
  std::vector<double> grid;
  if (n == 1) {
    grid.push_back(0.0);
    return grid;
  }
  for (int i = 0; i < n; ++i) {
    grid.push_back(static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return grid;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write sweep CSV '" + path.string() + "'");
  out << "lambda,metric_delta,linear_reference\n";
  for (const SweepPoint& p : points) {
    out << csv_double(p.lambda) << "," << csv_double(p.metric_delta) << ","
        << csv_double(p.linear_reference) << "\n";
  }
}

}  // namespace circscope
