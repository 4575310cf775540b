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

#include "earn/moo.hpp"
#include "earn/rng.hpp"

namespace earn {
namespace {

std::vector<Point> random_points(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point> points(n, Point(m));
  for (auto& p : points) {
    for (auto& x : p) x = rng.uniform();
  }
  return points;
}

void BM_NondominatedSort(benchmark::State& state) {
  const auto points = random_points(static_cast<std::size_t>(state.range(0)), 3, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fast_nondominated_sort(points));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NondominatedSort)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oNSquared);

void BM_CrowdingDistance(benchmark::State& state) {
  const auto points = random_points(static_cast<std::size_t>(state.range(0)), 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(crowding_distance(points));
}
BENCHMARK(BM_CrowdingDistance)->Arg(100)->Arg(700);

// Points on the simplex are mutually non-dominated.
std::vector<Point> front_points(std::size_t n, std::size_t m) {
  auto points = random_points(n, m, 3);
  for (auto& p : points) {
    double sum = 0.0;
    for (double x : p) sum += x;
    for (auto& x : p) x /= sum;
  }
  return points;
}

void BM_Hypervolume(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto points = front_points(static_cast<std::size_t>(state.range(0)), m);
  const Point reference(m, 1.1);
  for (auto _ : state) benchmark::DoNotOptimize(hypervolume(points, reference));
}
BENCHMARK(BM_Hypervolume)->Args({100, 2})->Args({1000, 2})->Args({100, 3})->Args({500, 3});

void BM_ArchiveInsert(benchmark::State& state) {
  const auto points = front_points(static_cast<std::size_t>(state.range(0)), 3);
  const Node g = make_classifier("m0");
  for (auto _ : state) {
    ParetoArchive archive({Objective::kError, Objective::kLatency, Objective::kSize});
    archive.track_hypervolume({1.1, 1.1, 1.1});
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      archive.insert(StructuralHash{i}, g, {p[0], p[1], p[2]});
    }
    benchmark::DoNotOptimize(archive.tracked_hypervolume());
  }
}
BENCHMARK(BM_ArchiveInsert)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace earn

BENCHMARK_MAIN();
