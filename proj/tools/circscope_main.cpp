// circscope: discover task circuits in decomposed transformers by edge
// attribution patching, validate them against activation patching and an
// ACDC-style greedy baseline, and evaluate against ground-truth circuits.
//
// Exit codes: 0 success, 1 usage error, 2 data/validation error,
// 3 numerical failure (including an exceeded pass budget).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "circscope/acdc.hpp"
#include "circscope/container.hpp"
#include "circscope/csv.hpp"
#include "circscope/eap.hpp"
#include "circscope/eval.hpp"
#include "circscope/model.hpp"
#include "circscope/patching.hpp"
#include "circscope/scores.hpp"
#include "circscope/synthetic.hpp"
#include "circscope/tasks.hpp"

namespace fs = std::filesystem;
using namespace circscope;

namespace {

constexpr const char* kZeroGradWarning =
    "warning: metric gradient is (near) zero at the clean point; "
    "attribution scores may all be zero";

struct CommonArgs {
  std::string model_path;
  std::string weights_path;
  std::string task_path;
  std::string metric_override;
  std::string out_dir = ".";
  long seed = 0;
  long long pass_budget = -1;
};

struct LoadedRun {
  ModelConfig config;
  DecomposedModel<float> model;
  TaskDataset task;
  MetricSpec metric;
};

LoadedRun load_run(const CommonArgs& args) {
  ModelConfig config = load_model_config(args.model_path);
  WeightsF weights = load_weights(args.weights_path, config);
  TaskDataset task = load_task(args.task_path, config.vocab_size);
  MetricSpec metric = task.metric;
  if (!args.metric_override.empty()) {
    metric.kind = parse_metric_kind(args.metric_override);
  }
  return {config, DecomposedModel<float>(config, std::move(weights)), std::move(task), metric};
}

fs::path ensure_out_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_report(const fs::path& path, const std::string& method, const LoadedRun& run,
                  long seed, Index zero_grad_pairs) {
  nlohmann::json j;
  j["method"] = method;
  j["metric"] = to_string(run.metric.kind);
  j["task"] = run.task.name;
  j["n_pairs"] = run.task.pairs.size();
  j["n_edges"] = run.model.graph().edges.size();
  j["forwards"] = pass_counters().forwards();
  j["backwards"] = pass_counters().backwards();
  j["zero_grad_pairs"] = zero_grad_pairs;
  j["seed"] = seed;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

int cmd_discover(const CommonArgs& common, const std::string& method, std::optional<long> top_k,
                 std::optional<double> threshold, std::optional<double> tau_eap,
                 std::optional<double> tau_acdc, bool per_pair_abs) {
  LoadedRun run = load_run(common);
  const fs::path out = ensure_out_dir(common.out_dir);
  pass_counters().reset();
  pass_counters().set_forward_budget(common.pass_budget);

  Index zero_grad_pairs = 0;
  Circuit circuit;

  if (method == "eap" || method == "actpatch") {
    EdgeScoreTable table;
    if (method == "eap") {
      EapOptions options;
      if (per_pair_abs) options.aggregation = ScoreAggregation::MeanOfAbs;
      EapResult result = eap_scores(run.model, run.task, run.metric, options);
      zero_grad_pairs = result.zero_grad_pairs;
      if (result.zero_grad_warning()) std::cerr << kZeroGradWarning << "\n";
      table = std::move(result.table);
    } else {
      TaskDataset task = run.task;
      task.metric = run.metric;
      table = activation_patch_scores(run.model, task, run.model.graph().edges);
    }
    write_scores_csv(out / "scores.csv", table);
    if (top_k) {
      circuit = top_k_circuit(table, static_cast<Index>(*top_k));
    } else {
      circuit = threshold_circuit(table, *threshold);
    }
    circuit.method = method + "_" + circuit.method;
  } else if (method == "acdc") {
    AcdcConfig config;
    config.tau = *threshold;
    config.metric = run.metric;
    circuit = acdc_prune(run.model, run.task, config);
  } else {  // eap+acdc
    circuit = eap_then_acdc(run.model, run.task, run.metric, *tau_eap, *tau_acdc);
  }

  write_circuit_json(out / "circuit.json", circuit);
  write_report(out / "report.json", method, run, common.seed, zero_grad_pairs);
  std::cout << "circuit: " << circuit.edges.size() << " edges; forwards="
            << pass_counters().forwards() << " backwards=" << pass_counters().backwards() << "\n";
  return 0;
}

int cmd_evaluate_roc(const std::string& scores_path, const std::string& circuit_path,
                     const std::string& truth_path, const std::string& model_path,
                     const std::string& out_dir) {
  const fs::path out = ensure_out_dir(out_dir);
  GroundTruthCircuit truth = load_ground_truth(truth_path);
  RocCurve curve;
  if (!scores_path.empty()) {
    curve = roc_from_ranking(read_scores_csv(scores_path), truth);
  } else {
    ModelConfig config = load_model_config(model_path);
    DecomposedGraph graph = build_graph(config);
    Circuit circuit = read_circuit_json(circuit_path);
    curve = roc_from_circuit_family({{circuit.parameter, circuit}}, truth, graph.edges);
  }
  write_roc_csv(out / "roc.csv", curve);
  std::cout << "auc=" << csv_double(curve.auc) << " youden_j=" << csv_double(youden_j(curve))
            << "\n";
  return 0;
}

int cmd_evaluate_hist(const std::string& scores_path, const std::string& truth_path,
                      long bins, std::vector<double> range, const std::string& out_dir) {
  const fs::path out = ensure_out_dir(out_dir);
  EdgeScoreTable table = read_scores_csv(scores_path);
  GroundTruthCircuit truth = load_ground_truth(truth_path);
  double lo, hi;
  if (range.size() == 2) {
    lo = range[0];
    hi = range[1];
  } else {
    lo = hi = 0;
    for (const auto& s : table.entries) {
      lo = std::min(lo, s.signed_score);
      hi = std::max(hi, s.signed_score);
    }
    if (!(hi > lo)) hi = lo + 1;
  }
  auto hist = score_distribution(table, truth, uniform_bin_edges(lo, hi, bins));
  write_histogram_csv(out / "histogram.csv", hist);
  std::cout << "histogram: " << hist.groups.size() << " groups x " << bins << " bins\n";
  return 0;
}

int cmd_evaluate_grid(const CommonArgs& common, const std::string& truth_path,
                      const std::vector<double>& taus_eap, const std::vector<double>& taus_acdc) {
  LoadedRun run = load_run(common);
  const fs::path out = ensure_out_dir(common.out_dir);
  GroundTruthCircuit truth = load_ground_truth(truth_path);
  pass_counters().reset();
  pass_counters().set_forward_budget(common.pass_budget);

  std::vector<GridCell> cells;
  for (double te : taus_eap) {
    for (double ta : taus_acdc) {
      Circuit circuit = eap_then_acdc(run.model, run.task, run.metric, te, ta);
      const auto [tpr, fpr] = tpr_fpr(circuit.edges, truth, run.model.graph().edges);
      cells.push_back({te, ta, tpr, fpr, tpr - fpr});
    }
  }
  write_grid_csv(out / "grid.csv", cells);
  std::cout << "grid: " << cells.size() << " cells\n";
  return 0;
}

int cmd_sweep(const CommonArgs& common, const std::string& edge_str, long lambdas,
              long pair_index) {
  LoadedRun run = load_run(common);
  const fs::path out = ensure_out_dir(common.out_dir);
  if (pair_index < 0 || pair_index >= static_cast<long>(run.task.pairs.size())) {
    throw DataError("pair index out of range");
  }
  const Edge edge = run.model.graph().edge_from_id(edge_str);
  pass_counters().reset();
  pass_counters().set_forward_budget(common.pass_budget);
  auto points = interpolation_sweep(run.model, run.task.pairs[pair_index], edge, run.metric,
                                    default_lambda_grid(static_cast<int>(lambdas)));
  write_sweep_csv(out / "sweep.csv", points);
  std::cout << "sweep: " << points.size() << " points for " << edge_str << "\n";
  return 0;
}

int cmd_demo(const std::string& out_dir, long seed, long pairs) {
  const fs::path out = ensure_out_dir(out_dir);
  PlantedOptions options;
  options.n_pairs = static_cast<int>(pairs);
  PlantedModel pm = planted_relay_model(static_cast<unsigned>(seed), options);
  save_model_config(out / "model.json", pm.config);
  save_weights(out / "weights.bin", pm.config, pm.weights);
  save_task(out / "task.json", pm.task);
  save_ground_truth(out / "truth.json", pm.truth);
  std::cout << "demo assets written to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"circuit discovery by edge attribution patching"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string method;
  std::optional<long> top_k;
  std::optional<double> threshold, tau_eap, tau_acdc;
  bool per_pair_abs = false;

  auto add_common = [&](CLI::App* cmd, bool need_weights = true) {
    cmd->add_option("--model", common.model_path, "model config JSON")->required();
    if (need_weights) {
      cmd->add_option("--weights", common.weights_path, "weight container")->required();
      cmd->add_option("--task", common.task_path, "task JSON")->required();
    }
    cmd->add_option("--metric", common.metric_override, "metric override")
        ->check(CLI::IsMember({"logit_diff", "prob_diff", "kl"}));
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--seed", common.seed, "run seed (recorded in the report)");
    cmd->add_option("--pass-budget", common.pass_budget,
                    "abort once this many forward passes have run");
  };

  CLI::App* discover = app.add_subcommand("discover", "score edges and extract a circuit");
  add_common(discover);
  discover->add_option("--method", method, "discovery method")
      ->required()
      ->check(CLI::IsMember({"eap", "actpatch", "acdc", "eap+acdc"}));
  discover->add_option("--top-k", top_k, "keep the k highest-scoring edges");
  discover->add_option("--threshold", threshold, "keep edges with |score| > T (acdc: tau)");
  discover->add_option("--tau-eap", tau_eap, "EAP threshold for eap+acdc");
  discover->add_option("--tau-acdc", tau_acdc, "ACDC threshold for eap+acdc");
  discover->add_flag("--per-pair-abs", per_pair_abs,
                     "rank by the mean of per-pair absolute scores");

  CLI::App* evaluate = app.add_subcommand("evaluate", "compare artifacts to a ground truth");
  std::string mode, scores_path, circuit_path, truth_path;
  long bins = 20;
  std::vector<double> range;
  std::vector<double> taus_eap, taus_acdc;
  evaluate->add_option("--mode", mode, "roc | hist | grid")
      ->required()
      ->check(CLI::IsMember({"roc", "hist", "grid"}));
  evaluate->add_option("--scores", scores_path, "score CSV (roc/hist input)");
  evaluate->add_option("--circuit", circuit_path, "circuit JSON (roc input)");
  evaluate->add_option("--truth", truth_path, "ground-truth circuit JSON")->required();
  evaluate->add_option("--model", common.model_path, "model config JSON");
  evaluate->add_option("--weights", common.weights_path, "weight container (grid mode)");
  evaluate->add_option("--task", common.task_path, "task JSON (grid mode)");
  evaluate->add_option("--metric", common.metric_override, "metric override (grid mode)")
      ->check(CLI::IsMember({"logit_diff", "prob_diff", "kl"}));
  evaluate->add_option("--bins", bins, "histogram bin count");
  evaluate->add_option("--range", range, "histogram range lo hi")->expected(2);
  evaluate->add_option("--tau-eap", taus_eap, "EAP thresholds (grid mode)");
  evaluate->add_option("--tau-acdc", taus_acdc, "ACDC thresholds (grid mode)");
  evaluate->add_option("--out", common.out_dir, "output directory");
  evaluate->add_option("--seed", common.seed, "run seed");
  evaluate->add_option("--pass-budget", common.pass_budget, "forward-pass budget (grid mode)");

  CLI::App* sweep = app.add_subcommand("sweep", "lambda-interpolated patching for one edge");
  add_common(sweep);
  std::string edge_str;
  long lambdas = 21;
  long pair_index = 0;
  sweep->add_option("--edge", edge_str, "edge id, e.g. 'a0.h0->final.in'")->required();
  sweep->add_option("--lambdas", lambdas, "grid size over [0,1]")->check(CLI::PositiveNumber);
  sweep->add_option("--pair", pair_index, "pair index within the task");

  CLI::App* demo = app.add_subcommand("demo", "generate a planted-circuit demo model and task");
  std::string demo_out = "demo";
  long demo_seed = 0;
  long demo_pairs = 4;
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--seed", demo_seed, "generator seed");
  demo->add_option("--pairs", demo_pairs, "number of prompt pairs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (discover->parsed()) {
      if (method == "eap" || method == "actpatch") {
        if (top_k.has_value() == threshold.has_value()) {
          std::cerr << "error: " << method << " needs exactly one of --top-k / --threshold\n";
          return 1;
        }
      } else if (method == "acdc") {
        if (!threshold) {
          std::cerr << "error: acdc needs --threshold\n";
          return 1;
        }
      } else if (!tau_eap || !tau_acdc) {
        std::cerr << "error: eap+acdc needs --tau-eap and --tau-acdc\n";
        return 1;
      }
      return cmd_discover(common, method, top_k, threshold, tau_eap, tau_acdc, per_pair_abs);
    }
    if (evaluate->parsed()) {
      if (mode == "roc") {
        if (scores_path.empty() == circuit_path.empty()) {
          std::cerr << "error: roc mode needs exactly one of --scores / --circuit\n";
          return 1;
        }
        if (!circuit_path.empty() && common.model_path.empty()) {
          std::cerr << "error: circuit-based roc needs --model for the edge universe\n";
          return 1;
        }
        return cmd_evaluate_roc(scores_path, circuit_path, truth_path, common.model_path,
                                common.out_dir);
      }
      if (mode == "hist") {
        if (scores_path.empty()) {
          std::cerr << "error: hist mode needs --scores\n";
          return 1;
        }
        return cmd_evaluate_hist(scores_path, truth_path, bins, range, common.out_dir);
      }
      if (common.model_path.empty() || common.weights_path.empty() || common.task_path.empty() ||
          taus_eap.empty() || taus_acdc.empty()) {
        std::cerr << "error: grid mode needs --model/--weights/--task/--tau-eap/--tau-acdc\n";
        return 1;
      }
      return cmd_evaluate_grid(common, truth_path, taus_eap, taus_acdc);
    }
    if (sweep->parsed()) {
      return cmd_sweep(common, edge_str, lambdas, pair_index);
    }
    if (demo->parsed()) {
      return cmd_demo(demo_out, demo_seed, demo_pairs);
    }
  } catch (const PassBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
