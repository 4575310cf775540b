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

#include <benchmark/benchmark.h>

#include "earn/evaluator.hpp"
#include "earn/graph.hpp"
#include "earn/pool.hpp"

namespace earn {
namespace {

EvalContext cpu() {
  EvalContext ctx;
  ctx.platform = "cpu";
  return ctx;
}

const ModelPool& pool() {
  static const ModelPool p = synth_pool(32, 5000, 10, 1);
  return p;
}

void BM_EvaluateClassifier(benchmark::State& state) {
  const Evaluator ev(pool(), cpu());
  const Node g = make_classifier("m7");
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate_uncached(g));
}
BENCHMARK(BM_EvaluateClassifier)->Unit(benchmark::kMicrosecond);

void BM_EvaluateChain(benchmark::State& state) {
  const Evaluator ev(pool(), cpu());
  std::vector<std::string> ids;
  for (int i = 0; i < state.range(0); ++i) ids.push_back("m" + std::to_string(i * 3));
  const Node g = make_chain(ids, std::vector<double>(ids.size() - 1, 0.7));
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate_uncached(g));
}
BENCHMARK(BM_EvaluateChain)->DenseRange(2, 4)->Unit(benchmark::kMicrosecond);

void BM_EvaluateMerger(benchmark::State& state) {
  const Evaluator ev(pool(), cpu());
  const auto protocol = static_cast<MergeProtocol>(state.range(0));
  std::vector<Node> children;
  for (int i = 0; i < 3; ++i) children.push_back(make_classifier("m" + std::to_string(i * 5)));
  Node g = make_merger(protocol, children);
  ev.assign_weights(g);
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate_uncached(g));
}
BENCHMARK(BM_EvaluateMerger)
    ->Arg(static_cast<int>(MergeProtocol::kAverage))
    ->Arg(static_cast<int>(MergeProtocol::kWeightedVoting))
    ->Unit(benchmark::kMicrosecond);

void BM_EvaluateCached(benchmark::State& state) {
  const Evaluator ev(pool(), cpu());
  const Node g = make_chain({"m1", "m2"}, {0.5});
  ev.evaluate(g);
  for (auto _ : state) benchmark::DoNotOptimize(ev.evaluate(g));
}
BENCHMARK(BM_EvaluateCached);

}  // namespace
}  // namespace earn

BENCHMARK_MAIN();
