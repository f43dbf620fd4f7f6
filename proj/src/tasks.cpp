#include "circscope/tasks.hpp"

#include <fstream>

#include <json.hpp>

namespace circscope {

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::LogitDiff:
      return "logit_diff";
    case MetricKind::ProbDiff:
      return "prob_diff";
    case MetricKind::KlDivergence:
      return "kl_divergence";
  }
  throw DataError("unknown metric kind");
}

MetricKind parse_metric_kind(const std::string& text) {
  if (text == "logit_diff") return MetricKind::LogitDiff;
  if (text == "prob_diff") return MetricKind::ProbDiff;
  if (text == "kl_divergence" || text == "kl") return MetricKind::KlDivergence;
  throw DataError("unknown metric kind '" + text + "'");
}

void TaskDataset::validate(std::optional<int> vocab_size) const {
  if (pairs.empty()) throw DataError("task '" + name + "': empty pair list");
  const std::size_t seq_len = pairs.front().clean_tokens.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PromptPair& p = pairs[i];
    const std::string at = "task '" + name + "': pair " + std::to_string(i);
    if (p.clean_tokens.size() != p.corrupt_tokens.size()) {
      throw DataError("length mismatch at pair " + std::to_string(i) + " (clean " +
                      std::to_string(p.clean_tokens.size()) + ", corrupt " +
                      std::to_string(p.corrupt_tokens.size()) + ")");
    }
    if (p.clean_tokens.empty()) throw DataError(at + ": empty token sequence");
    if (p.clean_tokens.size() != seq_len) {
      throw DataError(at + ": sequence length differs within the batch");
    }
    const Index pos = p.resolved_answer_position();
    if (pos < 0 || pos >= static_cast<Index>(p.clean_tokens.size())) {
      throw DataError(at + ": answer position out of range");
    }
    auto check_ids = [&](const std::vector<TokenId>& ids, const char* what) {
      for (TokenId t : ids) {
        if (t < 0 || (vocab_size && t >= *vocab_size)) {
          throw DataError(at + ": " + what + " token id " + std::to_string(t) + " out of range");
        }
      }
    };
    check_ids(p.clean_tokens, "clean");
    check_ids(p.corrupt_tokens, "corrupt");
    check_ids(p.correct_tokens, "correct");
    check_ids(p.wrong_tokens, "wrong");
    if (metric.kind != MetricKind::KlDivergence && p.correct_tokens.empty()) {
      throw DataError(at + ": correct_tokens required for " + to_string(metric.kind));
    }
  }
}

TaskDataset load_task(const std::filesystem::path& path, std::optional<int> vocab_size) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open task file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("task file '" + path.string() + "': " + e.what());
  }
  TaskDataset d;
  try {
    d.name = j.at("name").get<std::string>();
    d.metric.kind = parse_metric_kind(j.at("metric").at("kind").get<std::string>());
    for (const auto& pj : j.at("pairs")) {
      PromptPair p;
      p.clean_tokens = pj.at("clean_tokens").get<TokenSeq>();
      p.corrupt_tokens = pj.at("corrupt_tokens").get<TokenSeq>();
      p.answer_position = pj.contains("answer_position") ? pj.at("answer_position").get<Index>()
                                                         : static_cast<Index>(-1);
      if (pj.contains("correct_tokens")) {
        p.correct_tokens = pj.at("correct_tokens").get<std::vector<TokenId>>();
      }
      if (pj.contains("wrong_tokens")) {
        p.wrong_tokens = pj.at("wrong_tokens").get<std::vector<TokenId>>();
      }
      d.pairs.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("task file '" + path.string() + "': " + e.what());
  }
  d.validate(vocab_size);
  return d;
}

void save_task(const std::filesystem::path& path, const TaskDataset& dataset) {
  dataset.validate();
  nlohmann::json j;
  j["name"] = dataset.name;
  j["metric"] = {{"kind", to_string(dataset.metric.kind)}};
  j["pairs"] = nlohmann::json::array();
  for (const PromptPair& p : dataset.pairs) {
    nlohmann::json pj;
    pj["clean_tokens"] = p.clean_tokens;
    pj["corrupt_tokens"] = p.corrupt_tokens;
    pj["answer_position"] = p.resolved_answer_position();
    pj["correct_tokens"] = p.correct_tokens;
    pj["wrong_tokens"] = p.wrong_tokens;
    j["pairs"].push_back(std::move(pj));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write task file '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace circscope
