#pragma once

#include <cmath>
#include <filesystem>
#include <unordered_map>
#include <vector>

#include "circscope/model.hpp"
#include "circscope/parallel.hpp"
#include "circscope/scores.hpp"

namespace circscope {

// Edge-level activation patching: the ground-truth causal intervention that
// attribution patching approximates.
struct PatchRequest {
  Edge edge;
  double lambda = 1.0;  // do(E = lambda * e_corr + (1 - lambda) * e_clean)
};

// Writer outputs captured from one unpatched forward pass on the corrupt
// prompt. Covers every writer node; shapes match the clean run.
template <typename Scalar>
struct CorruptCache {
  std::unordered_map<std::string, Mat<Scalar>> writer_out;

  static CorruptCache capture(const DecomposedModel<Scalar>& model, const TokenSeq& corrupt) {
    ForwardRun<Scalar> run = model.forward(corrupt);
    CorruptCache cache;
    for (const NodeId& w : model.graph().writers) {
      cache.writer_out.emplace(to_string(w), run.writer_output(w));
    }
    return cache;
  }

  const Mat<Scalar>& at(const NodeId& w) const {
    auto it = writer_out.find(to_string(w));
    if (it == writer_out.end()) {
      throw DataError("corrupt cache missing writer '" + to_string(w) + "'");
    }
    return it->second;
  }
};

namespace detail {

// KL needs the unpatched clean distribution as its reference; the other
// metrics bind directly. Runs one clean forward pass in the KL case.
template <typename Scalar>
MetricBinding patched_run_metric(const DecomposedModel<Scalar>& model, const PromptPair& pair,
                                 const MetricSpec& spec) {
  if (spec.kind != MetricKind::KlDivergence) return bind_metric(spec, pair);
  ForwardRun<Scalar> clean = model.forward(pair.clean_tokens);
  return bind_metric_with_ref(spec, pair,
                              softmax_row_f64(clean.logits().row(pair.resolved_answer_position())));
}

}  // namespace detail

// L(x_clean | do(edge = lambda * e_corr + (1 - lambda) * e_clean)). Only the
// destination reader's accumulation input is modified; everything downstream
// recomputes naturally.
template <typename Scalar>
double activation_patch(const DecomposedModel<Scalar>& model, const PromptPair& pair,
                        const MetricSpec& spec, const PatchRequest& request,
                        const CorruptCache<Scalar>* cache = nullptr) {
  if (!model.graph().has_edge(request.edge)) {
    throw DataError("edge '" + edge_id(request.edge) + "' not in graph");
  }
  CorruptCache<Scalar> local;
  if (!cache) {
    local = CorruptCache<Scalar>::capture(model, pair.corrupt_tokens);
    cache = &local;
  }
  std::vector<EdgeIntervention<Scalar>> ivs;
  ivs.push_back({request.edge, request.lambda, cache->at(request.edge.src)});
  RunOptions<Scalar> opts;
  opts.interventions = &ivs;
  opts.metric = detail::patched_run_metric(model, pair, spec);
  return model.forward(pair.clean_tokens, opts).metric_value();
}

// Repeated activation patching over an edge list. Per pair: one corrupt
// forward, one clean forward, then one patched forward per edge (N+2 total).
// The ranking score is the mean over pairs of |L(patched) - L(clean)|; the
// signed column keeps the mean signed delta.
template <typename Scalar>
EdgeScoreTable activation_patch_scores(const DecomposedModel<Scalar>& model,
                                       const TaskDataset& dataset,
                                       const std::vector<Edge>& edges) {
  if (edges.empty()) throw DataError("activation_patch_scores: empty edge list");
  for (const Edge& e : edges) {
    if (!model.graph().has_edge(e)) throw DataError("edge '" + edge_id(e) + "' not in graph");
  }
  dataset.validate(model.config().vocab_size);

  const Index n_pairs = static_cast<Index>(dataset.pairs.size());
  const Index n_edges = static_cast<Index>(edges.size());
  std::vector<std::vector<double>> deltas(n_pairs, std::vector<double>(n_edges, 0.0));

  parallel_for(n_pairs, [&](Index pi) {
    const PromptPair& pair = dataset.pairs[pi];
    const CorruptCache<Scalar> cache = CorruptCache<Scalar>::capture(model, pair.corrupt_tokens);

    RunOptions<Scalar> clean_opts;
    clean_opts.metric = bind_metric(dataset.metric, pair);  // KL self-reference: zero baseline
    ForwardRun<Scalar> clean = model.forward(pair.clean_tokens, clean_opts);
    const double l_clean = clean.metric_value();
    MetricBinding patched_mb = dataset.metric.kind == MetricKind::KlDivergence
                                   ? bind_metric_with_ref(
                                         dataset.metric, pair,
                                         softmax_row_f64(clean.logits().row(
                                             pair.resolved_answer_position())))
                                   : bind_metric(dataset.metric, pair);

    for (Index ei = 0; ei < n_edges; ++ei) {
      std::vector<EdgeIntervention<Scalar>> ivs;
      ivs.push_back({edges[ei], 1.0, cache.at(edges[ei].src)});
      RunOptions<Scalar> opts;
      opts.interventions = &ivs;
      opts.metric = patched_mb;
      deltas[pi][ei] = model.forward(pair.clean_tokens, opts).metric_value() - l_clean;
    }
  });

  EdgeScoreTable table;
  table.pair_count = n_pairs;
  table.aggregation = ScoreAggregation::MeanOfAbs;
  for (Index ei = 0; ei < n_edges; ++ei) {
    double signed_sum = 0, abs_sum = 0;
    for (Index pi = 0; pi < n_pairs; ++pi) {
      signed_sum += deltas[pi][ei];
      abs_sum += std::abs(deltas[pi][ei]);
    }
    table.entries.push_back(
        {edges[ei], signed_sum / double(n_pairs), abs_sum / double(n_pairs)});
  }
  return table;
}

struct SweepPoint {
  double lambda = 0;
  double metric_delta = 0;      // L(do(lambda)) - L(clean)
  double linear_reference = 0;  // lambda * attribution score for the edge
};

// Uniform grid on [0, 1], endpoints included.
std::vector<double> default_lambda_grid(int n = 21);

// Metric change along the clean-to-corrupt interpolation for one edge, with
// the first-order overlay lambda * attribution score.
template <typename Scalar>
std::vector<SweepPoint> interpolation_sweep(const DecomposedModel<Scalar>& model,
                                            const PromptPair& pair, const Edge& edge,
                                            const MetricSpec& spec,
                                            const std::vector<double>& lambdas) {
  if (!model.graph().has_edge(edge)) {
    throw DataError("edge '" + edge_id(edge) + "' not in graph");
  }
  for (double l : lambdas) {
    if (l < 0.0 || l > 1.0) throw DataError("interpolation_sweep: lambda outside [0, 1]");
  }
  const CorruptCache<Scalar> cache = CorruptCache<Scalar>::capture(model, pair.corrupt_tokens);

  RunOptions<Scalar> clean_opts;
  clean_opts.metric = bind_metric(spec, pair);
  ForwardRun<Scalar> clean = model.forward(pair.clean_tokens, clean_opts);
  const double l_clean = clean.metric_value();
  MetricBinding patched_mb =
      spec.kind == MetricKind::KlDivergence
          ? bind_metric_with_ref(spec, pair,
                                 softmax_row_f64(clean.logits().row(
                                     pair.resolved_answer_position())))
          : bind_metric(spec, pair);

  // Attribution score for the linear reference, from the same clean run.
  clean.backward(1.0);
  const Mat<Scalar> diff = cache.at(edge.src) - clean.writer_output(edge.src);
  const Mat<Scalar>& grad = clean.reader_input_grad(edge.dst);
  const double attribution =
      diff.template cast<double>().cwiseProduct(grad.template cast<double>()).sum();

  std::vector<SweepPoint> out;
  for (double lambda : lambdas) {
    std::vector<EdgeIntervention<Scalar>> ivs;
    ivs.push_back({edge, lambda, cache.at(edge.src)});
    RunOptions<Scalar> opts;
    opts.interventions = &ivs;
    opts.metric = patched_mb;
    const double value = model.forward(pair.clean_tokens, opts).metric_value();
    out.push_back({lambda, value - l_clean, lambda * attribution});
  }
  return out;
}

// CSV: "lambda,metric_delta,linear_reference".
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

}  // namespace circscope
