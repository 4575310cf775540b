// Copyright 2026 The EARN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "earn/evaluator.hpp"
#include "earn/graph.hpp"
#include "earn/pool.hpp"
#include "earn/rng.hpp"
#include "testing.hpp"

namespace earn {
namespace {

using testing::make_pool;

EvalContext cpu(Split split = Split::kValidation) {
  EvalContext ctx;
  ctx.split = split;
  ctx.platform = "cpu";
  return ctx;
}

// Two-model fixture from the chain example: t_A = 1 ms, t_B = 4 ms.
ModelPool chain_pool() {
  return make_pool({{"A", {{0.9f, 0.1f}, {0.6f, 0.4f}, {0.55f, 0.45f}}, 10, 0.001},
                    {"B", {{0.5f, 0.5f}, {0.3f, 0.7f}, {0.8f, 0.2f}}, 40, 0.004}},
                   {0, 1, 0}, 2);
}

std::vector<double> row_of(const Prediction& p, std::size_t i) {
  const auto r = p.probs->row(i);
  return {r.begin(), r.end()};
}

TEST(EvaluatorChain, HandTracedExample) {
  const auto pool = chain_pool();
  const Evaluator ev(pool, cpu());
  const Node chain = make_chain({"A", "B"}, {0.7});
  const auto p = ev.predict(chain);
  EXPECT_EQ(row_of(p, 0), (std::vector<double>{0.9f, 0.1f}));
  EXPECT_EQ(row_of(p, 1), (std::vector<double>{0.3f, 0.7f}));
  EXPECT_EQ(row_of(p, 2), (std::vector<double>{0.8f, 0.2f}));
  ASSERT_EQ(p.activations.size(), 2u);
  EXPECT_EQ(p.activations[0].mask, (std::vector<std::uint8_t>{1, 1, 1}));
  EXPECT_EQ(p.activations[1].mask, (std::vector<std::uint8_t>{0, 1, 1}));
  EXPECT_EQ(p.activations[1].activated, 2u);

  const auto v = ev.evaluate(chain);
  EXPECT_EQ(v.error, 0.0);
  EXPECT_NEAR(v.latency, 0.001 + (2.0 / 3.0) * 0.004, 1e-15);
  EXPECT_NEAR(v.latency * 1000.0, 3.667, 5e-4);
  EXPECT_EQ(v.size, 50.0);
}

TEST(EvaluatorChain, ForwardsWhenThresholdEqualsMax) {
  const auto pool = make_pool({{"A", {{0.5f, 0.5f}, {0.75f, 0.25f}}, 1, 1.0},
                               {"B", {{0.1f, 0.9f}, {0.1f, 0.9f}}, 1, 1.0}},
                              {0, 0}, 2);
  const Evaluator ev(pool, cpu());
  const auto p = ev.predict(make_chain({"A", "B"}, {0.75}));
  EXPECT_EQ(p.activations[1].mask, (std::vector<std::uint8_t>{1, 1}));
  const auto q = ev.predict(make_chain({"A", "B"}, {0.5}));
  EXPECT_EQ(q.activations[1].mask, (std::vector<std::uint8_t>{1, 0}));
}

TEST(EvaluatorChain, LimitThresholds) {
  const auto pool = chain_pool();
  const Evaluator ev(pool, cpu());
  const auto a = ev.evaluate(make_classifier("A"));
  const auto b = ev.evaluate(make_classifier("B"));
  const auto zero = ev.evaluate(make_chain({"A", "B"}, {0.0}));
  const auto one = ev.evaluate(make_chain({"A", "B"}, {1.0}));
  EXPECT_EQ(zero.error, a.error);
  EXPECT_EQ(zero.latency, a.latency);
  EXPECT_EQ(one.error, b.error);
  EXPECT_EQ(one.latency, 0.001 + 0.004);
  EXPECT_EQ(row_of(ev.predict(make_chain({"A", "B"}, {0.0})), 1), row_of(ev.predict(make_classifier("A")), 1));
  EXPECT_EQ(row_of(ev.predict(make_chain({"A", "B"}, {1.0})), 1), row_of(ev.predict(make_classifier("B")), 1));
}

TEST(EvaluatorMerge, AverageExample) {
  const auto pool = make_pool({{"P", {{0.6f, 0.4f}}, 1, 1.0}, {"Q", {{0.2f, 0.8f}}, 1, 1.0}}, {1}, 2);
  const Evaluator ev(pool, cpu());
  const auto p = ev.predict(make_merger(MergeProtocol::kAverage, {make_classifier("P"), make_classifier("Q")}));
  EXPECT_NEAR(p.probs->row(0)[0], 0.4, 1e-7);
  EXPECT_NEAR(p.probs->row(0)[1], 0.6, 1e-7);
}

TEST(EvaluatorMerge, VotingExample) {
  const auto pool = make_pool({{"x", {{0.1f, 0.2f, 0.7f}}, 1, 1.0},
                               {"y", {{0.2f, 0.3f, 0.5f}}, 1, 1.0},
                               {"z", {{0.6f, 0.3f, 0.1f}}, 1, 1.0}},
                              {2}, 3);
  const Evaluator ev(pool, cpu());
  const Node g = make_merger(MergeProtocol::kVoting,
                             {make_classifier("x"), make_classifier("y"), make_classifier("z")});
  const auto row = row_of(ev.predict(g), 0);
  EXPECT_DOUBLE_EQ(row[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(row[1], 0.0);
  EXPECT_DOUBLE_EQ(row[2], 2.0 / 3.0);
  EXPECT_EQ(argmax(row), 2u);
  EXPECT_EQ(ev.evaluate(g).error, 0.0);
}

TEST(EvaluatorMerge, WeightedAndMaxProtocols) {
  const std::vector<double> p{0.6, 0.4};
  const std::vector<double> q{0.2, 0.8};
  const std::span<const double> rows[] = {p, q};
  const std::vector<double> w{1.0, 3.0};
  std::vector<double> out(2);

  merge_rows(MergeProtocol::kWeightedAverage, rows, w, out);
  EXPECT_NEAR(out[0], 0.3, 1e-15);
  EXPECT_NEAR(out[1], 0.7, 1e-15);
  merge_rows(MergeProtocol::kWeightedMax, rows, w, out);
  EXPECT_NEAR(out[0], 0.2, 1e-15);
  EXPECT_NEAR(out[1], 0.8, 1e-15);
  merge_rows(MergeProtocol::kMax, rows, {}, out);
  EXPECT_NEAR(out[0], 3.0 / 7.0, 1e-15);
  EXPECT_NEAR(out[1], 4.0 / 7.0, 1e-15);
  merge_rows(MergeProtocol::kWeightedVoting, rows, w, out);
  EXPECT_NEAR(out[0], 0.25, 1e-15);
  EXPECT_NEAR(out[1], 0.75, 1e-15);
}

TEST(EvaluatorMerge, NegativeWeightsStillYieldDistributions) {
  const std::vector<double> p{0.6, 0.4};
  const std::vector<double> q{0.2, 0.8};
  const std::span<const double> rows[] = {p, q};
  std::vector<double> out(2);
  for (auto protocol : {MergeProtocol::kWeightedAverage, MergeProtocol::kWeightedVoting,
                        MergeProtocol::kWeightedMax}) {
    for (const auto& w : {std::vector<double>{-1.0, 0.5}, std::vector<double>{-1.0, -2.0}}) {
      merge_rows(protocol, rows, w, out);
      EXPECT_GE(out[0], 0.0);
      EXPECT_GE(out[1], 0.0);
      EXPECT_NEAR(out[0] + out[1], 1.0, 1e-12) << to_string(protocol);
    }
  }
  merge_rows(MergeProtocol::kWeightedVoting, rows, std::vector<double>{-1.0, -2.0}, out);
  EXPECT_EQ(out, (std::vector<double>{1.0, 0.0}));
}

TEST(EvaluatorMerge, ArgmaxTiesBreakLow) {
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
}

TEST(EvaluatorIdentity, SingleClassifierMatchesPoolStats) {
  const auto pool = synth_pool(3, 200, 5, 4);
  for (auto split : {Split::kValidation, Split::kTest}) {
    const Evaluator ev(pool, cpu(split));
    for (const auto& m : pool.models) {
      const auto v = ev.evaluate(make_classifier(m.id));
      const auto& set = split == Split::kValidation ? m.validation : m.test;
      EXPECT_NEAR(v.error, 1.0 - accuracy(set), 1e-15);
      EXPECT_EQ(v.latency, m.latencies.at("cpu"));
      EXPECT_EQ(v.size, static_cast<double>(m.param_count));
    }
  }
}

TEST(EvaluatorIdentity, AverageOfSameModelTwice) {
  const auto pool = synth_pool(2, 100, 4, 8);
  const Evaluator ev(pool, cpu());
  const Node m = make_classifier("m1");
  const Node twice = make_merger(MergeProtocol::kAverage, {m, m});
  const auto a = ev.predict(m);
  const auto b = ev.predict(twice);
  for (std::size_t i = 0; i < 100; ++i) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(a.probs->row(i)[c], b.probs->row(i)[c], 1e-15);
  }
  EXPECT_EQ(ev.evaluate(twice).error, ev.evaluate(m).error);
  EXPECT_EQ(ev.evaluate(twice).size, ev.evaluate(m).size);

  EvalContext per_node = cpu();
  per_node.size_per_node = true;
  const Evaluator ev2(pool, per_node);
  EXPECT_EQ(ev2.evaluate(twice).size, 2.0 * ev.evaluate(m).size);
}

TEST(EvaluatorSamme, ReferenceValues) {
  EXPECT_DOUBLE_EQ(samme_weight(0.5, 2), 0.0);
  EXPECT_NEAR(samme_weight(0.25, 2), std::log(3.0), 1e-12);
  EXPECT_NEAR(samme_weight(0.25, 2), 1.0986, 1e-4);
  EXPECT_NEAR(samme_weight(0.25, 10), std::log(3.0) + std::log(9.0), 1e-12);
  EXPECT_NEAR(samme_weight(0.25, 10), 3.2958, 1e-4);
  EXPECT_NEAR(samme_weight(0.0, 2), std::log((1 - 1e-6) / 1e-6), 1e-9);
  EXPECT_NEAR(samme_weight(1.0, 2), std::log(1e-6 / (1 - 1e-6)), 1e-9);
  EXPECT_LT(samme_weight(0.95, 10), 0.0);
}

TEST(EvaluatorSamme, WeightsComeFromValidationSplit) {
  // Validation: m0 right on 3 of 4, m1 right on 1 of 4. Test split differs.
  auto pool = make_pool({{"m0", {{0.9f, 0.1f}, {0.2f, 0.8f}, {0.7f, 0.3f}, {0.6f, 0.4f}}, 1, 1.0},
                         {"m1", {{0.1f, 0.9f}, {0.8f, 0.2f}, {0.3f, 0.7f}, {0.4f, 0.6f}}, 1, 1.0}},
                        {0, 1, 0, 1}, 2);
  pool.models[0].test.probs = {0.1f, 0.9f, 0.8f, 0.2f, 0.3f, 0.7f, 0.4f, 0.6f};
  for (auto split : {Split::kValidation, Split::kTest}) {
    const Evaluator ev(pool, cpu(split));
    Node g = make_merger(MergeProtocol::kWeightedAverage,
                         {make_classifier("m0"), make_classifier("m1")}, {0.0, 0.0});
    ev.assign_weights(g);
    const auto& w = std::get<Merger>(g.value).weights;
    EXPECT_NEAR(w[0], std::log(3.0), 1e-12);
    EXPECT_NEAR(w[1], -std::log(3.0), 1e-12);
    EXPECT_TRUE(has_negative_weights(g));
  }
}

TEST(EvaluatorSamme, NestedWeightsUseChildEnsembleError) {
  const auto pool = synth_pool(4, 300, 6, 12);
  const Evaluator ev(pool, cpu(Split::kTest));
  Node inner = make_merger(MergeProtocol::kVoting, {make_classifier("m0"), make_classifier("m1"),
                                                    make_classifier("m2")});
  Node g = make_merger(MergeProtocol::kWeightedVoting,
                       {inner, make_chain({"m3", "m1"}, {0.6}), make_classifier("m2")}, {0, 0, 0});
  ev.assign_weights(g);
  const auto& m = std::get<Merger>(g.value);
  for (std::size_t i = 0; i < 3; ++i) {
    const double err = testing::oracle_validation_error(pool, m.children[i]);
    EXPECT_NEAR(m.weights[i], std::log((1 - err) / err) + std::log(5.0), 1e-12);
  }
}

TEST(EvaluatorOracle, RandomGraphsMatchPerSampleWalk) {
  Rng rng(7);
  for (int i = 0; i < 60; ++i) {
    const auto pool = synth_pool(2 + rng.index(6), 30 + rng.index(200), 2 + rng.index(8), i);
    const auto split = rng.bernoulli(0.5) ? Split::kValidation : Split::kTest;
    const Evaluator ev(pool, cpu(split));
    Node g = testing::random_graph(pool, rng, 4);
    ev.assign_weights(g);
    const auto oracle = testing::oracle_walk(pool, g, split, "cpu");
    const auto v = ev.evaluate(g);
    ASSERT_EQ(v.error, oracle.error) << serialize(g);
    ASSERT_NEAR(v.latency, oracle.latency, 1e-12 * std::max(1.0, oracle.latency));
    ASSERT_EQ(v.size, oracle.size);
    const auto p = ev.predict(g);
    ASSERT_EQ(p.activations.size(), oracle.fractions.size());
    for (std::size_t k = 0; k < oracle.fractions.size(); ++k) {
      ASSERT_EQ(p.activations[k].model_id, oracle.node_models[k]);
      ASSERT_EQ(p.activations[k].mask, oracle.reached[k]);
    }
    for (std::size_t s = 0; s < oracle.outputs.size(); ++s) {
      const auto row = p.probs->row(s);
      ASSERT_TRUE(std::equal(row.begin(), row.end(), oracle.outputs[s].begin())) << serialize(g);
    }
  }
}

TEST(EvaluatorProperties, MergerRowsAreDistributions) {
  Rng rng(17);
  const auto pool = synth_pool(5, 150, 7, 2);
  const Evaluator ev(pool, cpu());
  for (int i = 0; i < 100; ++i) {
    Node g = testing::random_graph(pool, rng, 4);
    ev.assign_weights(g);
    const auto p = ev.predict(g);
    for (std::size_t s = 0; s < p.probs->rows; ++s) {
      const auto row = p.probs->row(s);
      ASSERT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-4);
      for (double x : row) ASSERT_GE(x, 0.0);
    }
  }
}

Node shuffled(const Node& node, Rng& rng) {
  if (!node.is_merger()) return node;
  const auto& m = std::get<Merger>(node.value);
  std::vector<std::size_t> order(m.children.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  Merger out{m.protocol, {}, {}};
  for (auto i : order) {
    out.children.push_back(shuffled(m.children[i], rng));
    if (!m.weights.empty()) out.weights.push_back(m.weights[i]);
  }
  return Node{std::move(out)};
}

TEST(EvaluatorProperties, ChildPermutationInvariance) {
  Rng rng(31);
  const auto pool = synth_pool(6, 200, 5, 9);
  const Evaluator ev(pool, cpu());
  for (int i = 0; i < 200; ++i) {
    Node g = testing::random_graph(pool, rng, 4);
    ev.assign_weights(g);
    const Node h = shuffled(g, rng);
    ASSERT_EQ(structural_hash(g), structural_hash(h));
    ASSERT_EQ(ev.evaluate_uncached(g), ev.evaluate_uncached(h)) << serialize(g);
  }
}

TEST(EvaluatorProperties, ChainLatencyMonotoneInThreshold) {
  Rng rng(5);
  const auto pool = synth_pool(6, 300, 4, 21);
  const Evaluator ev(pool, cpu());
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t stages = 2 + rng.index(3);
    std::vector<std::string> ids;
    std::vector<double> taus;
    for (std::size_t i = 0; i < stages; ++i) ids.push_back(pool.models[rng.index(6)].id);
    for (std::size_t i = 0; i + 1 < stages; ++i) taus.push_back(rng.uniform());
    const std::size_t which = rng.index(taus.size());
    double previous = -1.0;
    for (int step = 0; step <= 100; ++step) {
      taus[which] = step / 100.0;
      const double latency = ev.evaluate_uncached(make_chain(ids, taus)).latency;
      ASSERT_GE(latency, previous);
      previous = latency;
    }
  }
}

TEST(EvaluatorCache, MemoizesByStructure) {
  const auto pool = synth_pool(3, 50, 3, 1);
  const Evaluator ev(pool, cpu());
  const Node g = make_merger(MergeProtocol::kAverage, {make_classifier("m0"), make_classifier("m1")});
  const Node h = make_merger(MergeProtocol::kAverage, {make_classifier("m1"), make_classifier("m0")});
  const auto first = ev.evaluate(g);
  EXPECT_EQ(ev.evaluate(h), first);
  EXPECT_EQ(ev.stats().misses, 1u);
  EXPECT_EQ(ev.stats().hits, 1u);
}

TEST(EvaluatorCache, BatchIsOrderedAndJobIndependent) {
  Rng rng(3);
  const auto pool = synth_pool(5, 120, 4, 6);
  std::vector<Node> graphs;
  for (int i = 0; i < 80; ++i) {
    Node g = testing::random_graph(pool, rng, 3);
    graphs.push_back(g);
    if (i % 7 == 0) graphs.push_back(g);
  }
  const Evaluator serial(pool, cpu());
  for (auto& g : graphs) serial.assign_weights(g);
  std::vector<ObjectiveVector> expected;
  for (const auto& g : graphs) expected.push_back(serial.evaluate_uncached(g));
  for (std::size_t jobs : {1u, 3u, 8u}) {
    const Evaluator ev(pool, cpu());
    CacheStats stats;
    EXPECT_EQ(ev.evaluate_batch(graphs, jobs, &stats), expected);
    EXPECT_EQ(stats.hits + stats.misses, graphs.size());
    CacheStats again;
    EXPECT_EQ(ev.evaluate_batch(graphs, jobs, &again), expected);
    EXPECT_EQ(again.hits, graphs.size());
  }
}

TEST(EvaluatorContext, Validation) {
  const auto pool = synth_pool(2, 20, 2, 0);
  EvalContext bad = cpu();
  bad.platform = "tpu";
  EXPECT_THROW(Evaluator(pool, bad), PoolError);
  EvalContext none = cpu();
  none.objectives.clear();
  EXPECT_THROW(Evaluator(pool, none), std::invalid_argument);
}

TEST(EvaluatorContext, ObjectiveParsingAndProjection) {
  EXPECT_EQ(parse_objectives("size,error"), (std::vector<Objective>{Objective::kError, Objective::kSize}));
  EXPECT_EQ(parse_objectives("error,latency,size").size(), 3u);
  EXPECT_THROW(parse_objectives(""), std::invalid_argument);
  EXPECT_THROW(parse_objectives("error,speed"), std::invalid_argument);
  EXPECT_THROW(parse_split("train"), std::invalid_argument);
  const ObjectiveVector v{0.1, 2.0, 300.0};
  EXPECT_EQ(project(v, parse_objectives("error,size")), (Point{0.1, 300.0}));
  EXPECT_EQ(project(v, parse_objectives("latency")), (Point{2.0}));
}

}  // namespace
}  // namespace earn
