#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "circscope/acdc.hpp"
#include "support/naive.hpp"
#include "support/toy.hpp"

using namespace circscope;

namespace {

std::set<std::string> ids(const std::vector<Edge>& edges) {
  std::set<std::string> out;
  for (const Edge& e : edges) out.insert(edge_id(e));
  return out;
}

}  // namespace

TEST_CASE("tau zero removes exactly the zero-effect edges") {
  // Head a0.h1 is dead: zero value and output paths, so corrupting any edge
  // into it cannot move the metric. Every live edge survives tau = 0.
  ModelConfig c = toy::small_config(1, 2, 0, LayerNormMode::None);
  WeightsF w = random_weights(c, 61, 0.3);
  w.attn[0].W_V[1].setZero();
  w.attn[0].W_O[1].setZero();
  w.attn[0].b_V.row(0).segment(c.d_head, c.d_head).setZero();
  DecomposedModel<float> model(c, w);
  TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 900);

  AcdcConfig config;
  config.tau = 0.0;
  config.metric = task.metric;
  Circuit circuit = acdc_prune(model, task, config);

  for (const Edge& e : model.graph().edges) {
    CAPTURE(edge_id(e));
    const bool into_dead_head =
        (e.dst.kind == NodeKind::HeadV || e.dst.kind == NodeKind::HeadQ ||
         e.dst.kind == NodeKind::HeadK) &&
        e.dst.head == 1;
    const bool from_dead_head = e.src.kind == NodeKind::HeadOut && e.src.head == 1;
    if (into_dead_head || from_dead_head) {
      CHECK(!circuit.contains(e));
    } else if (e.src.kind == NodeKind::PosEmbed) {
      // Positions are identical across the pair, so these edges do nothing.
      CHECK(!circuit.contains(e));
    }
  }
  // The pair differs at position 0 only, and the metric reads the last
  // position: embed->final.in cannot move it, while the value path through
  // the live head carries the signal.
  CHECK(!circuit.contains(parse_edge_id("embed->final.in")));
  CHECK(circuit.contains(parse_edge_id("embed->a0.h0.v")));
}

TEST_CASE("tau beyond any possible change empties the circuit") {
  ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
  auto model = toy::small_model<float>(62, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 901);
  AcdcConfig config;
  config.tau = 1e18;
  config.metric = task.metric;
  CHECK(acdc_prune(model, task, config).edges.empty());
}

TEST_CASE("greedy pruning matches the naive from-scratch reference") {
  ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
  for (unsigned seed : {1u, 2u, 3u}) {
    auto model = toy::small_model<float>(seed, c);
    REQUIRE(model.graph().edges.size() == 9);
    TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 902 + seed);

    // A mid-range threshold: half the median live-edge effect.
    AcdcConfig config;
    config.metric = task.metric;
    config.tau = 0.02;
    Circuit fast = acdc_prune(model, task, config);
    std::vector<Edge> slow =
        naive::acdc_prune(model, task, task.metric, config.tau, model.graph().edges);
    CHECK(ids(fast.edges) == ids(slow));
  }
}

TEST_CASE("monotonicity: larger tau keeps a subset") {
  ModelConfig c = toy::small_config(1, 2, 0, LayerNormMode::None);
  for (unsigned seed : {11u, 12u}) {
    auto model = toy::small_model<float>(seed, c);
    TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 910 + seed);
    std::vector<Circuit> circuits;
    for (double tau : {0.0, 0.01, 0.05, 0.2, 1.0}) {
      AcdcConfig config;
      config.tau = tau;
      config.metric = task.metric;
      circuits.push_back(acdc_prune(model, task, config));
    }
    for (std::size_t i = 1; i < circuits.size(); ++i) {
      const auto big = ids(circuits[i - 1].edges);
      for (const Edge& e : circuits[i].edges) {
        CAPTURE(edge_id(e));
        CHECK(big.count(edge_id(e)) == 1);
      }
    }
  }
}

TEST_CASE("determinism: identical inputs produce identical circuits") {
  ModelConfig c = toy::small_config(1, 2, 0, LayerNormMode::None);
  auto model = toy::small_model<float>(63, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 4, 3, 903);
  AcdcConfig config;
  config.tau = 0.03;
  config.metric = task.metric;
  Circuit a = acdc_prune(model, task, config);
  Circuit b = acdc_prune(model, task, config);
  CHECK(ids(a.edges) == ids(b.edges));
}

TEST_CASE("eap_then_acdc composes the two stages") {
  ModelConfig c = toy::small_config(1, 2, 0, LayerNormMode::None);
  auto model = toy::small_model<float>(64, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 904);

  SUBCASE("zero thresholds equal ACDC on the EAP-thresholded start") {
    auto eap = eap_scores(model, task, task.metric);
    AcdcConfig config;
    config.tau = 0.0;
    config.metric = task.metric;
    config.starting_subgraph = threshold_circuit(eap.table, 0.0);
    Circuit direct = acdc_prune(model, task, config);
    Circuit combined = eap_then_acdc(model, task, task.metric, 0.0, 0.0);
    CHECK(ids(combined.edges) == ids(direct.edges));
  }
  SUBCASE("eap threshold above every score gives an empty circuit") {
    Circuit empty = eap_then_acdc(model, task, task.metric, 1e12, 0.0);
    CHECK(empty.edges.empty());
  }
  SUBCASE("grid of thresholds equals running the stages by hand") {
    auto eap = eap_scores(model, task, task.metric);
    for (double tau_eap : {0.0, 0.02, 0.1}) {
      for (double tau_acdc : {0.0, 0.02, 0.1}) {
        CAPTURE(tau_eap);
        CAPTURE(tau_acdc);
        Circuit stage1 = threshold_circuit(eap.table, tau_eap);
        AcdcConfig config;
        config.tau = tau_acdc;
        config.metric = task.metric;
        config.starting_subgraph = stage1;
        Circuit by_hand = acdc_prune(model, task, config);
        Circuit combined = eap_then_acdc(model, task, task.metric, tau_eap, tau_acdc);
        CHECK(ids(combined.edges) == ids(by_hand.edges));

        // Always a subset of the EAP stage.
        const auto stage1_ids = ids(stage1.edges);
        for (const Edge& e : combined.edges) CHECK(stage1_ids.count(edge_id(e)) == 1);
      }
    }
  }
}

TEST_CASE("starting subgraph edges must belong to the graph") {
  ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
  auto model = toy::small_model<float>(65, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 4, 1, 905);
  AcdcConfig config;
  config.metric = task.metric;
  Circuit bad;
  bad.edges = {parse_edge_id("a7.h0->final.in")};
  config.starting_subgraph = bad;
  CHECK_THROWS_AS(acdc_prune(model, task, config), DataError);
}
