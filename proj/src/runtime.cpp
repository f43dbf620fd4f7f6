#include <cstdlib>
#include <thread>

#include "circscope/model.hpp"
#include "circscope/parallel.hpp"
#include "circscope/pass_counters.hpp"

namespace circscope {

PassCounters& pass_counters() {
  static PassCounters counters;
  return counters;
}

int worker_cap() {
  if (const char* env = std::getenv("CIRCSCOPE_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

MetricBinding bind_metric(const MetricSpec& spec, const PromptPair& pair) {
  MetricBinding b;
  b.kind = spec.kind;
  b.answer_pos = pair.resolved_answer_position();
  b.correct = pair.correct_tokens;
  b.wrong = pair.wrong_tokens;
  return b;
}

MetricBinding bind_metric_with_ref(const MetricSpec& spec, const PromptPair& pair,
                                   Eigen::RowVectorXd clean_ref_probs) {
  MetricBinding b = bind_metric(spec, pair);
  if (spec.kind != MetricKind::KlDivergence) {
    throw DataError("reference distribution only applies to the KL metric");
  }
  b.kl_ref = std::move(clean_ref_probs);
  return b;
}

}  // namespace circscope
