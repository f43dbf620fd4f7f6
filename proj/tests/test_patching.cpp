#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "circscope/patching.hpp"
#include "circscope/pass_counters.hpp"
#include "support/naive.hpp"
#include "support/toy.hpp"

using namespace circscope;

namespace {

// One-dimensional model whose metric is affine in the embed->final.in edge:
// d_model = 1, no layers, embeddings 1.0 and 3.0, unembed weight 2.0 on the
// correct token. L_clean = 2, patched jumps to 6.
DecomposedModel<float> affine_model() {
  ModelConfig c;
  c.n_layers = 0;
  c.n_heads = 0;
  c.d_model = 1;
  c.d_head = 1;
  c.d_mlp = 0;
  c.vocab_size = 2;
  c.n_ctx = 4;
  c.layernorm = LayerNormMode::None;
  c.positional = PositionalMode::Learned;
  WeightsF w = zero_weights(c);
  w.W_E(0, 0) = 1.0f;
  w.W_E(1, 0) = 3.0f;
  w.W_U(0, 0) = 2.0f;
  return DecomposedModel<float>(c, w);
}

PromptPair affine_pair() {
  PromptPair p;
  p.clean_tokens = {0};
  p.corrupt_tokens = {1};
  p.answer_position = 0;
  p.correct_tokens = {0};
  return p;
}

}  // namespace

TEST_CASE("patching with identical corrupt activation leaves the metric unchanged") {
  ModelConfig c = toy::small_config(2, 2, 8);
  auto model = toy::small_model<float>(41, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 5, 700);
  pair.corrupt_tokens = pair.clean_tokens;  // e_corr == e_clean
  const MetricSpec spec{MetricKind::LogitDiff};

  RunOptions<float> opts;
  opts.metric = bind_metric(spec, pair);
  const double clean = model.forward(pair.clean_tokens, opts).metric_value();
  for (const Edge& e : {model.graph().edges.front(), model.graph().edges.back()}) {
    CHECK(activation_patch(model, pair, spec, {e, 1.0}) == clean);
  }
}

TEST_CASE("lambda zero is exactly the clean run") {
  ModelConfig c = toy::small_config(2, 2, 8);
  auto model = toy::small_model<float>(42, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 5, 701);
  const MetricSpec spec{MetricKind::LogitDiff};
  RunOptions<float> opts;
  opts.metric = bind_metric(spec, pair);
  const double clean = model.forward(pair.clean_tokens, opts).metric_value();
  CHECK(activation_patch(model, pair, spec, {model.graph().edges[3], 0.0}) == clean);
}

TEST_CASE("affine toy model patches analytically") {
  auto model = affine_model();
  PromptPair pair = affine_pair();
  const MetricSpec spec{MetricKind::LogitDiff};
  const Edge e = parse_edge_id("embed->final.in");

  RunOptions<float> opts;
  opts.metric = bind_metric(spec, pair);
  CHECK(model.forward(pair.clean_tokens, opts).metric_value() == 2.0);
  // Patched: tap = 1 + (3 - 1) = 3, metric = 2 * 3 = 6.
  CHECK(activation_patch(model, pair, spec, {e, 1.0}) == 6.0);
  // Interpolation: metric = 2 * (1 + 2 lambda), affine in lambda.
  CHECK(activation_patch(model, pair, spec, {e, 0.5}) == doctest::Approx(4.0));
  CHECK(activation_patch(model, pair, spec, {e, 0.25}) == doctest::Approx(3.0));

  CHECK_THROWS_AS(activation_patch(model, pair, spec, {parse_edge_id("a0.h0->final.in"), 1.0}),
                  DataError);
}

TEST_CASE("patching touches nothing upstream and shifts the reader by the delta") {
  ModelConfig c = toy::small_config(2, 2, 8);
  auto model = toy::small_model<float>(43, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 5, 702);
  const Edge e = parse_edge_id("a0.h1->a1.h0.v");
  REQUIRE(model.graph().has_edge(e));

  auto cache = CorruptCache<float>::capture(model, pair.corrupt_tokens);
  auto clean = model.forward(pair.clean_tokens);

  std::vector<EdgeIntervention<float>> ivs;
  const double lambda = 0.75;
  ivs.push_back({e, lambda, cache.at(e.src)});
  RunOptions<float> opts;
  opts.interventions = &ivs;
  auto patched = model.forward(pair.clean_tokens, opts);

  // Upstream writers and unrelated readers are untouched bit-for-bit.
  for (const NodeId& w : model.graph().writers) {
    if (writer_stage(w, c) <= 1) {
      CHECK(patched.writer_output(w) == clean.writer_output(w));
    }
  }
  CHECK(patched.reader_input(parse_node_id("a1.h0.q")) ==
        clean.reader_input(parse_node_id("a1.h0.q")));

  // The patched reader moves by exactly lambda * (corr - clean), pre-layernorm.
  MatF expected = clean.reader_input(e.dst) +
                  float(lambda) * (cache.at(e.src) - clean.writer_output(e.src));
  CHECK((patched.reader_input(e.dst) - expected).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("activation patch scores: zero weights, single edge, naive oracle") {
  SUBCASE("all-zero model scores zero everywhere") {
    ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
    DecomposedModel<float> model(c, zero_weights(c));
    TaskDataset task = toy::simple_task(c.vocab_size, 4, 2, 703);
    auto table = activation_patch_scores(model, task, model.graph().edges);
    for (const auto& s : table.entries) {
      CHECK(s.signed_score == 0.0);
      CHECK(s.abs_score == 0.0);
    }
  }
  SUBCASE("single-edge list matches a direct activation_patch call") {
    ModelConfig c = toy::small_config(1, 2, 6);
    auto model = toy::small_model<float>(44, c);
    TaskDataset task = toy::simple_task(c.vocab_size, 4, 1, 704);
    const Edge e = model.graph().edges[5];
    auto table = activation_patch_scores(model, task, {e});
    REQUIRE(table.entries.size() == 1);
    RunOptions<float> opts;
    opts.metric = bind_metric(task.metric, task.pairs[0]);
    const double clean = model.forward(task.pairs[0].clean_tokens, opts).metric_value();
    const double patched = activation_patch(model, task.pairs[0], task.metric, {e, 1.0});
    CHECK(table.entries[0].abs_score == doctest::Approx(std::abs(patched - clean)).epsilon(1e-12));
  }
  SUBCASE("nine-edge graph equals the naive from-scratch reference") {
    ModelConfig c = toy::small_config(1, 1, 0, LayerNormMode::None);
    for (unsigned seed : {1u, 2u}) {
      auto model = toy::small_model<float>(seed, c);
      TaskDataset task = toy::simple_task(c.vocab_size, 4, 3, 705 + seed);
      REQUIRE(model.graph().edges.size() == 9);
      auto fast = activation_patch_scores(model, task, model.graph().edges);
      auto slow = naive::activation_patch_scores(model, task, model.graph().edges);
      for (std::size_t i = 0; i < fast.entries.size(); ++i) {
        CHECK(fast.entries[i].signed_score ==
              doctest::Approx(slow.entries[i].signed_score).epsilon(1e-10));
        CHECK(fast.entries[i].abs_score ==
              doctest::Approx(slow.entries[i].abs_score).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("activation patch scores use exactly P*(N+2) forward passes") {
  ModelConfig c = toy::small_config(2, 2, 8);
  auto model = toy::small_model<float>(45, c);
  TaskDataset task = toy::simple_task(c.vocab_size, 5, 3, 706);
  std::vector<Edge> edges(model.graph().edges.begin(), model.graph().edges.begin() + 9);

  pass_counters().reset();
  activation_patch_scores(model, task, edges);
  CHECK(pass_counters().forwards() == 3 * (9 + 2));
  CHECK(pass_counters().backwards() == 0);
}

TEST_CASE("interpolation sweep endpoints and linearity") {
  auto model = affine_model();
  PromptPair pair = affine_pair();
  const MetricSpec spec{MetricKind::LogitDiff};
  const Edge e = parse_edge_id("embed->final.in");

  SUBCASE("grid {0} gives the single zero point") {
    auto pts = interpolation_sweep(model, pair, e, spec, {0.0});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].lambda == 0.0);
    CHECK(pts[0].metric_delta == 0.0);
    CHECK(pts[0].linear_reference == 0.0);
  }
  SUBCASE("grid {1} matches activation patching at full strength") {
    auto pts = interpolation_sweep(model, pair, e, spec, {1.0});
    REQUIRE(pts.size() == 1);
    RunOptions<float> opts;
    opts.metric = bind_metric(spec, pair);
    const double clean = model.forward(pair.clean_tokens, opts).metric_value();
    const double patched = activation_patch(model, pair, spec, {e, 1.0});
    CHECK(pts[0].metric_delta == doctest::Approx(patched - clean));
  }
  SUBCASE("affine metric: the sweep is linear and matches the EAP reference line") {
    auto pts = interpolation_sweep(model, pair, e, spec, default_lambda_grid(21));
    REQUIRE(pts.size() == 21);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      CHECK(std::abs(pts[i].metric_delta - pts[i].linear_reference) < 1e-6);
      if (i > 0) CHECK(pts[i].lambda > pts[i - 1].lambda);
    }
    // Slope is the attribution score: (3 - 1) * 2 = 4.
    CHECK(pts.back().metric_delta == doctest::Approx(4.0).epsilon(1e-6));
  }
  SUBCASE("lambdas outside [0,1] are rejected") {
    CHECK_THROWS_AS(interpolation_sweep(model, pair, e, spec, {1.5}), DataError);
  }
}

TEST_CASE("sweep on a curved model brackets the patch value between endpoints") {
  ModelConfig c = toy::small_config(2, 2, 8);  // layernorm bends the metric
  auto model = toy::small_model<float>(46, c);
  PromptPair pair = toy::simple_pair(c.vocab_size, 5, 707);
  const Edge e = parse_edge_id("a0.h0->final.in");
  auto pts = interpolation_sweep(model, pair, e, MetricSpec{MetricKind::LogitDiff},
                                 default_lambda_grid(5));
  CHECK(pts.front().metric_delta == 0.0);
  const double full = activation_patch(model, pair, MetricSpec{MetricKind::LogitDiff}, {e, 1.0});
  RunOptions<float> opts;
  opts.metric = bind_metric(MetricSpec{MetricKind::LogitDiff}, pair);
  const double clean = model.forward(pair.clean_tokens, opts).metric_value();
  CHECK(pts.back().metric_delta == doctest::Approx(full - clean).epsilon(1e-9));
}
