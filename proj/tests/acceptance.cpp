// Acceptance suite: one line per criterion, PASS or FAIL, nonzero exit if
// anything fails. Criterion 10 needs externally supplied GPT-2-small assets
// and is reported as SKIP when they are absent.
//
// Run directly or through ctest; CIRCSCOPE_BIN must point at the CLI binary
// for the warning-emission check.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "circscope/acdc.hpp"
#include "circscope/container.hpp"
#include "circscope/eap.hpp"
#include "circscope/eval.hpp"
#include "circscope/finite_diff.hpp"
#include "circscope/model.hpp"
#include "circscope/pass_counters.hpp"
#include "circscope/patching.hpp"
#include "circscope/synthetic.hpp"
#include "circscope/tasks.hpp"
#include "support/naive.hpp"
#include "support/toy.hpp"

using namespace circscope;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int n, const std::string& what, bool ok, const std::string& detail = "") {
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << n << ": " << what;
  if (!detail.empty()) std::cout << "  [" << detail << "]";
  std::cout << std::endl;
  if (!ok) ++failures;
}

void criterion(int n, const std::string& what, const std::function<bool(std::string&)>& fn) {
  std::string detail;
  bool ok = false;
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(n, what, ok, detail);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1 -------------------------------------------------------------

bool gradient_correctness(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  // Random 2-layer, 2-head, d_model = 16 model, run in 64-bit storage so the
  // finite-difference oracle is not noise-limited.
  ModelConfig c = toy::small_config(2, 2, 24, LayerNormMode::Pre);
  auto model = toy::small_model<double>(1001, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 6, 1002);
  MetricBinding mb = bind_metric(MetricSpec{MetricKind::LogitDiff}, pair);

  RunOptions<double> opts;
  opts.metric = mb;
  auto run = model.forward(pair.clean_tokens, opts);
  run.backward(1.0);

  const double step = 1e-3;
  double max_err = 0;
  for (const NodeId& r : model.graph().readers) {
    const MatD& grad = run.reader_input_grad(r);
    for (Index i = 0; i < grad.rows(); ++i) {
      for (Index j = 0; j < grad.cols(); ++j) {
        auto eval = [&](double eps) {
          RunOptions<double> o2;
          o2.metric = mb;
          std::vector<EdgeIntervention<double>> ivs;
          MatD delta = MatD::Zero(grad.rows(), grad.cols());
          delta(i, j) = eps;
          const NodeId src = model.graph().writers.front();
          ivs.push_back({Edge{src, r}, 1.0, run.writer_output(src) + delta});
          o2.interventions = &ivs;
          return model.forward(pair.clean_tokens, o2).metric_value();
        };
        const double fd = (eval(step) - eval(-step)) / (2 * step);
        max_err = std::max(max_err, relative_error(grad(i, j), fd, 1e-8));
      }
    }
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream ss;
  ss << "max rel err " << max_err << ", " << elapsed << "s";
  detail = ss.str();
  return max_err < 1e-3 && elapsed < 60.0;
}

// --- criterion 2 -------------------------------------------------------------

bool single_backward_equivalence(std::string& detail) {
  ModelConfig c = toy::small_config(2, 2, 0, LayerNormMode::Pre);
  auto model = toy::small_model<float>(1003, c);
  if (model.graph().edges.size() < 30) return false;
  TaskDataset task = toy::simple_task(c.vocab_size, 5, 1, 1004);

  pass_counters().reset();
  auto fast = eap_scores(model, task, task.metric);
  const auto backwards = pass_counters().backwards();

  auto slow = naive::eap_scores_multi_backward(model, task, task.metric);
  double max_diff = 0;
  for (std::size_t i = 0; i < slow.entries.size(); ++i) {
    max_diff = std::max(max_diff, std::abs(fast.table.entries[i].signed_score -
                                           slow.entries[i].signed_score));
  }
  std::ostringstream ss;
  ss << model.graph().edges.size() << " edges, max diff " << max_diff << ", backwards "
     << backwards;
  detail = ss.str();
  return max_diff < 1e-6 && backwards == 1;
}

// --- criterion 3 -------------------------------------------------------------

bool affine_exactness(std::string& detail) {
  ModelConfig c;
  c.n_layers = 0;
  c.n_heads = 0;
  c.d_model = 1;
  c.d_head = 1;
  c.d_mlp = 0;
  c.vocab_size = 2;
  c.n_ctx = 4;
  c.layernorm = LayerNormMode::None;
  WeightsF w = zero_weights(c);
  w.W_E(0, 0) = 1.0f;  // e_clean
  w.W_E(1, 0) = 3.0f;  // e_corr
  w.W_U(0, 0) = 2.0f;  // metric weight
  DecomposedModel<float> model(c, w);

  TaskDataset task;
  task.name = "affine";
  task.metric.kind = MetricKind::LogitDiff;
  PromptPair p;
  p.clean_tokens = {0};
  p.corrupt_tokens = {1};
  p.answer_position = 0;
  p.correct_tokens = {0};
  task.pairs = {p};

  const Edge e = parse_edge_id("embed->final.in");
  auto result = eap_scores(model, task, task.metric);
  const double attribution = result.table.at(e).signed_score;

  RunOptions<float> opts;
  opts.metric = bind_metric(task.metric, p);
  const double clean = model.forward(p.clean_tokens, opts).metric_value();
  const double patched = activation_patch(model, p, task.metric, {e, 1.0});
  const double act_delta = patched - clean;

  auto sweep = interpolation_sweep(model, p, e, task.metric, default_lambda_grid(11));
  double max_linearity_err = 0;
  for (const auto& pt : sweep) {
    max_linearity_err =
        std::max(max_linearity_err, std::abs(pt.metric_delta - pt.lambda * attribution));
  }
  std::ostringstream ss;
  ss << "attribution " << attribution << ", activation delta " << act_delta
     << ", sweep linearity err " << max_linearity_err;
  detail = ss.str();
  return std::abs(attribution - act_delta) < 1e-6 && max_linearity_err < 1e-6;
}

// --- criterion 4 -------------------------------------------------------------

bool first_order_convergence(std::string& detail) {
  ModelConfig c = toy::small_config(2, 2, 8, LayerNormMode::Pre);
  auto model = toy::small_model<double>(1005, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 5, 1, 1006);
  const PromptPair& pair = task.pairs[0];

  auto result = eap_scores(model, task, task.metric);
  auto cache = CorruptCache<double>::capture(model, pair.corrupt_tokens);
  auto clean_run = model.forward(pair.clean_tokens);
  MetricBinding mb = bind_metric(task.metric, pair);
  RunOptions<double> base;
  base.metric = mb;
  const double l_clean = model.forward(pair.clean_tokens, base).metric_value();

  auto patched_at = [&](const Edge& e, double h) {
    std::vector<EdgeIntervention<double>> ivs;
    const MatD diff = cache.at(e.src) - clean_run.writer_output(e.src);
    ivs.push_back({e, 1.0, clean_run.writer_output(e.src) + h * diff});
    RunOptions<double> opts;
    opts.interventions = &ivs;
    opts.metric = mb;
    return model.forward(pair.clean_tokens, opts).metric_value();
  };

  const double h = 1.0 / 64.0;
  int tested = 0;
  double min_ratio = 1e9;
  for (const Edge& e : model.graph().edges) {
    const double attr = result.table.at(e).signed_score;
    const double err_h = std::abs(patched_at(e, h) - l_clean - h * attr);
    const double err_h2 = std::abs(patched_at(e, h / 2) - l_clean - (h / 2) * attr);
    if (err_h < 1e-11) continue;  // no curvature along this edge
    ++tested;
    min_ratio = std::min(min_ratio, err_h / err_h2);
  }
  std::ostringstream ss;
  ss << tested << " edges, min halving ratio " << min_ratio;
  detail = ss.str();
  return tested >= 20 && min_ratio >= 3.0;
}

// --- criterion 5 -------------------------------------------------------------

bool pass_count_contract(std::string& detail) {
  ModelConfig c = toy::small_config(3, 4, 8);
  auto model = toy::small_model<float>(1007, c);
  if (model.graph().edges.size() < 200) return false;
  TaskDataset task = toy::simple_task(c.vocab_size, 5, 2, 1008);
  const Index pairs = static_cast<Index>(task.pairs.size());

  std::ostringstream ss;
  bool ok = true;

  // EAP cost is independent of N: the whole table from 2 forwards and 1
  // backward per pair on every model size.
  for (int layers : {1, 2, 3}) {
    ModelConfig cc = toy::small_config(layers, 4, 8);
    auto m = toy::small_model<float>(1009 + layers, cc);
    pass_counters().reset();
    eap_scores(m, task, task.metric);
    ok = ok && pass_counters().forwards() == static_cast<std::uint64_t>(2 * pairs) &&
         pass_counters().backwards() == static_cast<std::uint64_t>(pairs);
    ss << "eap[" << m.graph().edges.size() << " edges]=" << pass_counters().forwards() << "f+"
       << pass_counters().backwards() << "b ";
  }

  // Activation patching needs N+2 forwards per pair.
  for (Index n : {9, 50, 200}) {
    std::vector<Edge> edges(model.graph().edges.begin(), model.graph().edges.begin() + n);
    pass_counters().reset();
    activation_patch_scores(model, task, edges);
    const auto expect = static_cast<std::uint64_t>(pairs * (n + 2));
    ok = ok && pass_counters().forwards() == expect && pass_counters().backwards() == 0;
    ss << "actpatch[N=" << n << "]=" << pass_counters().forwards() << "f ";
  }
  detail = ss.str();
  return ok;
}

// --- criterion 6 -------------------------------------------------------------

bool oracle_equivalence(std::string& detail) {
  ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
  bool ok = true;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    auto model = toy::small_model<float>(seed, c);
    if (model.graph().edges.size() != 9) return false;
    TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 1100 + seed);

    auto fast_scores = activation_patch_scores(model, task, model.graph().edges);
    auto slow_scores = naive::activation_patch_scores(model, task, model.graph().edges);
    for (std::size_t i = 0; i < 9; ++i) {
      ok = ok && std::abs(fast_scores.entries[i].signed_score -
                          slow_scores.entries[i].signed_score) < 1e-9;
      ok = ok && std::abs(fast_scores.entries[i].abs_score - slow_scores.entries[i].abs_score) <
                     1e-9;
    }

    AcdcConfig config;
    config.tau = 0.02;
    config.metric = task.metric;
    Circuit fast = acdc_prune(model, task, config);
    std::vector<Edge> slow =
        naive::acdc_prune(model, task, task.metric, config.tau, model.graph().edges);
    ok = ok && fast.edges.size() == slow.size();
    for (std::size_t i = 0; ok && i < slow.size(); ++i) ok = fast.edges[i] == slow[i];
  }
  detail = "5 seeds, 9-edge graph";
  return ok;
}

// --- criterion 7 -------------------------------------------------------------

bool planted_circuit_recovery(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream ss;
  bool ok = true;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    PlantedModel pm = planted_relay_model(seed);
    DecomposedModel<float> model(pm.config, pm.weights);
    auto result = eap_scores(model, pm.task, pm.task.metric);
    const double auc = roc_from_ranking(result.table, pm.truth).auc;
    ss << "auc[" << seed << "]=" << auc << " ";
    ok = ok && auc >= 0.9;
  }
  const double elapsed = seconds_since(t0);
  ss << elapsed << "s";
  detail = ss.str();
  return ok && elapsed < 120.0;
}

// --- criterion 8 -------------------------------------------------------------

bool eval_arithmetic(std::string& detail) {
  EdgeScoreTable table;
  table.pair_count = 1;
  table.entries.push_back({parse_edge_id("embed->a0.h0.q"), 0.9, 0.9});  // e1 (truth)
  table.entries.push_back({parse_edge_id("pos->a0.h0.q"), 0.1, 0.1});    // e2 (truth)
  table.entries.push_back({parse_edge_id("a0.h0->final.in"), 0.5, 0.5}); // e3
  GroundTruthCircuit truth;
  truth.task = "hand";
  truth.edges = {parse_edge_id("embed->a0.h0.q"), parse_edge_id("pos->a0.h0.q")};

  auto curve = roc_from_ranking(table, truth);
  const std::vector<std::pair<double, double>> expect = {{0, 0}, {0, 0.5}, {1, 0.5}, {1, 1}};
  bool ok = curve.points.size() == 4;
  for (std::size_t i = 0; ok && i < 4; ++i) {
    ok = curve.points[i].fpr == expect[i].first && curve.points[i].tpr == expect[i].second;
  }
  ok = ok && curve.auc == 0.5 && youden_j(curve) == 0.5;
  std::ostringstream ss;
  ss << "auc " << curve.auc << ", J " << youden_j(curve);
  detail = ss.str();
  return ok;
}

// --- criterion 9 -------------------------------------------------------------

bool kl_zero_gradient(std::string& detail) {
  ModelConfig c = toy::small_config(2, 2, 8);
  auto model = toy::small_model<float>(1012, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 5, 1013);
  RunOptions<float> opts;
  opts.metric = bind_metric(MetricSpec{MetricKind::KlDivergence}, pair);
  auto run = model.forward(pair.clean_tokens, opts);
  run.backward(1.0);
  const double norm = run.logits_grad_norm();
  bool ok = norm < 1e-6;
  std::ostringstream ss;
  ss << "seed gradient norm " << norm;

  // The CLI emits the documented warning on stderr.
  const char* bin = std::getenv("CIRCSCOPE_BIN");
  if (!bin) {
    ss << "; CIRCSCOPE_BIN unset, CLI warning not checked";
    detail = ss.str();
    return false;
  }
  const fs::path dir = fs::temp_directory_path() / "circscope_acceptance_c9";
  fs::create_directories(dir);
  PlantedModel pm = planted_relay_model(9);
  save_model_config(dir / "model.json", pm.config);
  save_weights(dir / "weights.bin", pm.config, pm.weights);
  save_task(dir / "task.json", pm.task);
  const std::string cmd = std::string(bin) + " discover --model " + (dir / "model.json").string() +
                          " --weights " + (dir / "weights.bin").string() + " --task " +
                          (dir / "task.json").string() + " --method eap --metric kl --top-k 0" +
                          " --out " + (dir / "out").string() + " > /dev/null 2> " +
                          (dir / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  std::ifstream err_in(dir / "stderr.txt");
  std::string err((std::istreambuf_iterator<char>(err_in)), std::istreambuf_iterator<char>());
  fs::remove_all(dir);
  const bool warned = err.find("gradient") != std::string::npos &&
                      err.find("zero") != std::string::npos;
  ok = ok && rc == 0 && warned;
  ss << "; CLI warning " << (warned ? "emitted" : "MISSING");
  detail = ss.str();
  return ok;
}

// --- criterion 10 (stretch) ---------------------------------------------------

// Expects CIRCSCOPE_GPT2_DIR with model.json, weights.bin (the documented
// container format), ioi_task.json, and ioi_truth.json.
bool gpt2_ioi_stretch(std::string& detail) {
  const char* dir_env = std::getenv("CIRCSCOPE_GPT2_DIR");
  if (!dir_env) {
    detail = "external GPT-2-small assets not provided";
    return true;  // reported as SKIP by the caller
  }
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(dir_env);
  ModelConfig config = load_model_config(dir / "model.json");
  WeightsF weights = load_weights(dir / "weights.bin", config);
  TaskDataset task = load_task(dir / "ioi_task.json", config.vocab_size);
  if (task.pairs.size() < 25) {
    detail = "need >= 25 IOI pairs";
    return false;
  }
  GroundTruthCircuit truth = load_ground_truth(dir / "ioi_truth.json");
  DecomposedModel<float> model(config, std::move(weights));
  auto result = eap_scores(model, task, task.metric);

  double in_sum = 0, out_sum = 0;
  Index in_n = 0, out_n = 0;
  std::set<std::string> truth_ids;
  for (const Edge& e : truth.edges) truth_ids.insert(edge_id(e));
  for (const auto& s : result.table.entries) {
    if (truth_ids.count(edge_id(s.edge))) {
      in_sum += std::abs(s.signed_score);
      ++in_n;
    } else {
      out_sum += std::abs(s.signed_score);
      ++out_n;
    }
  }
  const double elapsed = seconds_since(t0);
  const double in_mean = in_sum / std::max<Index>(in_n, 1);
  const double out_mean = out_sum / std::max<Index>(out_n, 1);
  std::ostringstream ss;
  ss << "in-circuit mean |score| " << in_mean << " vs out " << out_mean << ", " << elapsed << "s";
  detail = ss.str();
  return in_mean > out_mean && elapsed < 1800.0;
}

}  // namespace

int main() {
  criterion(1, "reader gradients match central finite differences", gradient_correctness);
  criterion(2, "single backward equals per-reader multi-backward scores",
            single_backward_equivalence);
  criterion(3, "affine model: attribution score is exact", affine_exactness);
  criterion(4, "first-order error falls >= 3x when the perturbation halves",
            first_order_convergence);
  criterion(5, "EAP passes are constant; activation patching needs N+2", pass_count_contract);
  criterion(6, "fast paths match naive from-scratch references", oracle_equivalence);
  criterion(7, "planted circuit recovered with AUC >= 0.9 over 5 seeds",
            planted_circuit_recovery);
  criterion(8, "hand ROC example: points, AUC, Youden's J exact", eval_arithmetic);
  criterion(9, "KL at the clean point: zero gradient and CLI warning", kl_zero_gradient);

  // Stretch: external GPT-2-small weights.
  {
    std::string detail;
    bool ok = false;
    try {
      ok = gpt2_ioi_stretch(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!std::getenv("CIRCSCOPE_GPT2_DIR")) {
      std::cout << "SKIP  criterion 10 (stretch): GPT-2 IOI directional check  [" << detail << "]"
                << std::endl;
    } else {
      report(10, "GPT-2 IOI directional check (stretch)", ok, detail);
    }
  }

  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) + " criteria FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
