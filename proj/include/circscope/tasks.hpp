#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "circscope/common.hpp"
#include "circscope/math.hpp"

namespace circscope {

enum class MetricKind { LogitDiff, ProbDiff, KlDivergence };

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(const std::string& text);

// Batch reduction is always the arithmetic mean in fixed pair order.
struct MetricSpec {
  MetricKind kind = MetricKind::LogitDiff;
};

// One matched clean/corrupt prompt, pre-tokenized and position-aligned.
struct PromptPair {
  TokenSeq clean_tokens;
  TokenSeq corrupt_tokens;
  Index answer_position = -1;  // -1: last position
  std::vector<TokenId> correct_tokens;
  std::vector<TokenId> wrong_tokens;

  Index resolved_answer_position() const {
    return answer_position >= 0 ? answer_position
                                : static_cast<Index>(clean_tokens.size()) - 1;
  }
};

struct TaskDataset {
  std::string name;
  std::vector<PromptPair> pairs;
  MetricSpec metric;

  // Checks pair alignment, uniform length, positions, and (when known)
  // token-id range. Throws DataError naming the offending pair.
  void validate(std::optional<int> vocab_size = std::nullopt) const;
};

TaskDataset load_task(const std::filesystem::path& path,
                      std::optional<int> vocab_size = std::nullopt);
void save_task(const std::filesystem::path& path, const TaskDataset& dataset);

// ---- pure metric functions (doubles; no tape involved) ----------------------

// Sum of correct-token logits minus sum of wrong-token logits at the answer
// position. Affine in the logits.
template <typename Derived>
double metric_logit_diff(const Eigen::MatrixBase<Derived>& logits, const PromptPair& pair) {
  const Index pos = pair.resolved_answer_position();
  if (pos < 0 || pos >= logits.rows()) {
    throw DataError("metric_logit_diff: answer position out of range");
  }
  double s = 0;
  for (TokenId t : pair.correct_tokens) s += static_cast<double>(logits(pos, t));
  for (TokenId t : pair.wrong_tokens) s -= static_cast<double>(logits(pos, t));
  return s;
}

// Softmax-probability mass of correct tokens minus wrong tokens.
template <typename Derived>
double metric_prob_diff(const Eigen::MatrixBase<Derived>& logits, const PromptPair& pair) {
  const Index pos = pair.resolved_answer_position();
  if (pos < 0 || pos >= logits.rows()) {
    throw DataError("metric_prob_diff: answer position out of range");
  }
  Eigen::RowVectorXd p = softmax_row_f64(logits.row(pos));
  double s = 0;
  for (TokenId t : pair.correct_tokens) s += p(t);
  for (TokenId t : pair.wrong_tokens) s -= p(t);
  return s;
}

// KL(P_clean || P_patched) over the answer-position distribution. Zero when
// the distributions coincide, with an all-zero gradient there.
template <typename DerivedA, typename DerivedB>
double metric_kl(const Eigen::MatrixBase<DerivedA>& patched_logits,
                 const Eigen::MatrixBase<DerivedB>& clean_logits, const PromptPair& pair) {
  const Index pos = pair.resolved_answer_position();
  if (pos < 0 || pos >= patched_logits.rows() || pos >= clean_logits.rows()) {
    throw DataError("metric_kl: answer position out of range");
  }
  Eigen::RowVectorXd p = softmax_row_f64(clean_logits.row(pos));
  Eigen::RowVectorXd row = patched_logits.row(pos).template cast<double>();
  const double m = row.maxCoeff();
  const double lse = m + std::log((row.array() - m).exp().sum());
  double kl = 0;
  for (Index j = 0; j < row.cols(); ++j) {
    if (p(j) > 0) kl += p(j) * (std::log(p(j)) - (row(j) - lse));
  }
  return std::max(kl, 0.0);  // non-negative by Gibbs; clear rounding residue
}

}  // namespace circscope
