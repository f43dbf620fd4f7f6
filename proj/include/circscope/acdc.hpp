#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "circscope/eap.hpp"
#include "circscope/model.hpp"
#include "circscope/parallel.hpp"
#include "circscope/patching.hpp"

namespace circscope {

struct AcdcConfig {
  double tau = 0;
  MetricSpec metric;
  // Defaults to the full graph. Edges outside the starting subgraph are held
  // corrupted for the entire run and are never candidates for retention.
  std::optional<Circuit> starting_subgraph;
};

namespace detail {

// Dataset-mean evaluation with a fixed set of corrupted edges.
template <typename Scalar>
std::vector<double> acdc_eval(const DecomposedModel<Scalar>& model, const TaskDataset& dataset,
                              const std::vector<CorruptCache<Scalar>>& caches,
                              const std::vector<MetricBinding>& metrics,
                              const std::vector<Edge>& corrupted) {
  const Index n_pairs = static_cast<Index>(dataset.pairs.size());
  std::vector<double> values(n_pairs, 0.0);
  parallel_for(n_pairs, [&](Index pi) {
    const PromptPair& pair = dataset.pairs[pi];
    std::vector<EdgeIntervention<Scalar>> ivs;
    ivs.reserve(corrupted.size());
    for (const Edge& e : corrupted) ivs.push_back({e, 1.0, caches[pi].at(e.src)});
    RunOptions<Scalar> opts;
    opts.interventions = &ivs;
    opts.metric = metrics[pi];
    values[pi] = model.forward(pair.clean_tokens, opts).metric_value();
  });
  return values;
}

}  // namespace detail

// Greedy activation-patching baseline. Sweeps readers in reverse canonical
// order; an incoming edge is evaluated by corrupting it on top of everything
// already removed (cumulative ablation). The edge is permanently removed when
// the mean |metric change| against the current-circuit baseline is <= tau, and
// the running baseline is updated after each accepted removal. tau = 0 thus
// removes exactly the zero-effect edges.
template <typename Scalar>
Circuit acdc_prune(const DecomposedModel<Scalar>& model, const TaskDataset& dataset,
                   const AcdcConfig& config) {
  if (config.tau < 0) throw DataError("acdc_prune: tau must be non-negative");
  dataset.validate(model.config().vocab_size);
  const DecomposedGraph& graph = model.graph();
  const Index n_pairs = static_cast<Index>(dataset.pairs.size());

  std::vector<Edge> start = graph.edges;
  if (config.starting_subgraph) {
    start = config.starting_subgraph->edges;
    for (const Edge& e : start) {
      if (!graph.has_edge(e)) {
        throw DataError("acdc_prune: starting subgraph edge '" + edge_id(e) + "' not in graph");
      }
    }
  }
  auto in_start = [&](const Edge& e) {
    for (const Edge& s : start) {
      if (s == e) return true;
    }
    return false;
  };

  // Per-pair corrupt caches and metric bindings, captured once.
  std::vector<CorruptCache<Scalar>> caches(n_pairs);
  std::vector<MetricBinding> metrics(n_pairs);
  parallel_for(n_pairs, [&](Index pi) {
    const PromptPair& pair = dataset.pairs[pi];
    caches[pi] = CorruptCache<Scalar>::capture(model, pair.corrupt_tokens);
    metrics[pi] = detail::patched_run_metric(model, pair, config.metric);
  });

  // Edges outside the starting subgraph stay corrupted throughout.
  std::vector<Edge> removed;
  for (const Edge& e : graph.edges) {
    if (!in_start(e)) removed.push_back(e);
  }

  std::vector<double> baseline = detail::acdc_eval(model, dataset, caches, metrics, removed);
  std::vector<Edge> kept;

  // Readers in reverse canonical order, incoming edges in canonical writer
  // order (the recursive output-to-input sweep).
  for (auto rit = graph.readers.rbegin(); rit != graph.readers.rend(); ++rit) {
    for (const NodeId& w : graph.writers) {
      Edge e{w, *rit};
      if (!graph.valid_edge(w, *rit) || !in_start(e)) continue;
      std::vector<Edge> trial_removed = removed;
      trial_removed.push_back(e);
      const std::vector<double> trial =
          detail::acdc_eval(model, dataset, caches, metrics, trial_removed);
      double mean_abs_change = 0;
      for (Index pi = 0; pi < n_pairs; ++pi) mean_abs_change += std::abs(trial[pi] - baseline[pi]);
      mean_abs_change /= double(n_pairs);
      if (mean_abs_change <= config.tau) {
        removed = std::move(trial_removed);
        baseline = trial;
      } else {
        kept.push_back(e);
      }
    }
  }

  // Report kept edges in canonical graph order.
  Circuit c;
  c.method = "acdc";
  c.parameter = config.tau;
  for (const Edge& e : graph.edges) {
    for (const Edge& k : kept) {
      if (k == e) {
        c.edges.push_back(e);
        break;
      }
    }
  }
  return c;
}

// EAP first, ACDC on the surviving subgraph (edges pruned by EAP stay
// corrupted throughout the ACDC stage). The result is a subset of the EAP
// circuit.
template <typename Scalar>
Circuit eap_then_acdc(const DecomposedModel<Scalar>& model, const TaskDataset& dataset,
                      const MetricSpec& metric, double tau_eap, double tau_acdc) {
  if (tau_eap < 0 || tau_acdc < 0) throw DataError("eap_then_acdc: thresholds must be >= 0");
  const EapResult eap = eap_scores(model, dataset, metric);
  Circuit stage1 = threshold_circuit(eap.table, tau_eap);
  AcdcConfig config;
  config.tau = tau_acdc;
  config.metric = metric;
  config.starting_subgraph = stage1;
  Circuit out = acdc_prune(model, dataset, config);
  out.method = "eap+acdc";
  out.parameter = tau_acdc;
  out.source_digest = eap.table.digest();
  return out;
}

}  // namespace circscope
