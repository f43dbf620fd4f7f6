#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "circscope/model.hpp"
#include "circscope/parallel.hpp"
#include "circscope/patching.hpp"
#include "circscope/scores.hpp"

namespace circscope {

struct EapOptions {
  ScoreAggregation aggregation = ScoreAggregation::SignedMeanAbsAfter;
  // Warn when the gradient at the logits falls below this norm: every
  // attribution score is then (near) zero, which is a property of the
  // metric (KL at the clean point), not a failure.
  double zero_grad_threshold = 1e-8;
};

struct EapResult {
  EdgeScoreTable table;
  Index zero_grad_pairs = 0;  // pairs whose backward seed gradient was ~zero
  bool zero_grad_warning() const { return zero_grad_pairs > 0; }
};

// Edge Attribution Patching: per-edge first-order estimates of the
// activation-patching effect for every edge at once, from two forward passes
// and one backward pass per pair:
//
//   score(w -> r) = sum over (position, d_model) of
//                   (w_out_corr - w_out_clean) .* dL/d(r's accumulation input)
//
// evaluated at the clean point. The single backward pass provides every
// reader gradient because each reader reads its own copy of the residual sum.
template <typename Scalar>
EapResult eap_scores(const DecomposedModel<Scalar>& model, const TaskDataset& dataset,
                     const MetricSpec& metric, const EapOptions& options = {}) {
  dataset.validate(model.config().vocab_size);
  const DecomposedGraph& graph = model.graph();
  const Index n_pairs = static_cast<Index>(dataset.pairs.size());
  const Index n_edges = static_cast<Index>(graph.edges.size());

  std::vector<std::vector<double>> per_pair(n_pairs, std::vector<double>(n_edges, 0.0));
  std::vector<unsigned char> zero_grad(n_pairs, 0);

  parallel_for(n_pairs, [&](Index pi) {
    const PromptPair& pair = dataset.pairs[pi];
    const CorruptCache<Scalar> corrupt = CorruptCache<Scalar>::capture(model, pair.corrupt_tokens);

    RunOptions<Scalar> opts;
    opts.metric = bind_metric(metric, pair);
    ForwardRun<Scalar> clean = model.forward(pair.clean_tokens, opts);
    clean.backward(1.0);
    if (clean.logits_grad_norm() < options.zero_grad_threshold) zero_grad[pi] = 1;

    // One dot product per edge against the shared per-reader gradients.
    for (Index ei = 0; ei < n_edges; ++ei) {
      const Edge& e = graph.edges[ei];
      const Mat<Scalar>& w_clean = clean.writer_output(e.src);
      const Mat<Scalar>& w_corr = corrupt.at(e.src);
      const Mat<Scalar>& grad = clean.reader_input_grad(e.dst);
      double s = 0;
      for (Index i = 0; i < w_clean.rows(); ++i) {
        for (Index j = 0; j < w_clean.cols(); ++j) {
          s += (static_cast<double>(w_corr(i, j)) - static_cast<double>(w_clean(i, j))) *
               static_cast<double>(grad(i, j));
        }
      }
      per_pair[pi][ei] = s;
    }
  });

  EapResult result;
  result.table.pair_count = n_pairs;
  result.table.aggregation = options.aggregation;
  for (Index pi = 0; pi < n_pairs; ++pi) result.zero_grad_pairs += zero_grad[pi];
  for (Index ei = 0; ei < n_edges; ++ei) {
    double signed_sum = 0, abs_sum = 0;
    for (Index pi = 0; pi < n_pairs; ++pi) {
      signed_sum += per_pair[pi][ei];
      abs_sum += std::abs(per_pair[pi][ei]);
    }
    const double signed_mean = signed_sum / double(n_pairs);
    const double abs_score = options.aggregation == ScoreAggregation::SignedMeanAbsAfter
                                 ? std::abs(signed_mean)
                                 : abs_sum / double(n_pairs);
    result.table.entries.push_back({graph.edges[ei], signed_mean, abs_score});
  }
  return result;
}

// The k edges with largest absolute score; ties broken by canonical edge id
// so the selection is stable and reproducible.
Circuit top_k_circuit(const EdgeScoreTable& table, Index k);

// All edges with absolute score strictly greater than tau.
Circuit threshold_circuit(const EdgeScoreTable& table, double tau);

}  // namespace circscope
