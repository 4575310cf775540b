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

#include "earn/pool.hpp"
#include "earn/search.hpp"

namespace earn {
namespace {

void BM_SearchGeneration(benchmark::State& state) {
  const auto pool = synth_pool(static_cast<std::size_t>(state.range(0)), 1000, 10, 5);
  EvalContext ctx;
  ctx.platform = "cpu";
  EarnConfig config;
  config.population_limit = 100;
  config.offspring_limit = 50;
  config.iterations = 10;
  for (auto _ : state) benchmark::DoNotOptimize(run(pool, config, ctx).archive.size());
  state.SetItemsProcessed(state.iterations() * 500);
}
BENCHMARK(BM_SearchGeneration)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Mutate(benchmark::State& state) {
  const auto pool = synth_pool(16, 100, 5, 6);
  EvalContext ctx;
  ctx.platform = "cpu";
  const Evaluator ev(pool, ctx);
  const EarnConfig config;
  Rng rng(1);
  Node g = make_merger(MergeProtocol::kAverage,
                       {make_chain({"m0", "m1", "m2"}, {0.5, 0.5}), make_classifier("m3")});
  for (auto _ : state) benchmark::DoNotOptimize(mutate(g, config, ev, rng));
}
BENCHMARK(BM_Mutate);

}  // namespace
}  // namespace earn

BENCHMARK_MAIN();
