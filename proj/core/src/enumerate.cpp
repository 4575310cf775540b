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

#include "earn/enumerate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "earn/csv.hpp"
#include "earn/moo.hpp"

namespace earn {

namespace {

void evaluate_all(const Evaluator& evaluator, std::vector<EnumResult>& results, std::size_t jobs) {
  std::vector<Node> graphs;
  graphs.reserve(results.size());
  for (const auto& r : results) graphs.push_back(r.graph);
  const auto objectives = evaluator.evaluate_batch(graphs, jobs);
  for (std::size_t i = 0; i < results.size(); ++i) results[i].objectives = objectives[i];
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kSingle: return "single";
    case Strategy::kBagging: return "bagging";
    case Strategy::kBoosting: return "boosting";
    case Strategy::kChain2: return "chain2";
  }
  return "?";
}

std::vector<double> threshold_grid(double step, bool include_one) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("grid step must be in (0, 1]");
  const auto count = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) grid.push_back(static_cast<double>(i) / static_cast<double>(count));
  if (include_one) grid.push_back(1.0);
  return grid;
}

std::vector<double> default_threshold_grid() { return threshold_grid(0.01); }

std::vector<EnumResult> enumerate_singles(const Evaluator& evaluator) {
  std::vector<EnumResult> results;
  for (const auto& m : evaluator.pool().models) {
    results.push_back({Strategy::kSingle, {m.id}, std::nullopt, std::nullopt, make_classifier(m.id), {}});
  }
  evaluate_all(evaluator, results, 1);
  return results;
}

std::vector<EnumResult> enumerate_merged(const Evaluator& evaluator, std::size_t k,
                                         std::span<const MergeProtocol> protocols, std::size_t jobs) {
  const auto& pool = evaluator.pool();
  const std::size_t n = pool.models.size();
  if (k < 2 || k > n) throw std::invalid_argument("ensemble size must be in [2, pool size]");
  std::vector<EnumResult> results;
  std::vector<std::size_t> combo(k);
  for (std::size_t i = 0; i < k; ++i) combo[i] = i;
  while (true) {
    std::vector<std::string> members;
    for (auto i : combo) members.push_back(pool.models[i].id);
    for (auto protocol : protocols) {
      std::vector<Node> children;
      for (const auto& id : members) children.push_back(make_classifier(id));
      Node graph = make_merger(protocol, std::move(children));
      evaluator.assign_weights(graph);
      results.push_back({is_weighted(protocol) ? Strategy::kBoosting : Strategy::kBagging, members,
                         protocol, std::nullopt, std::move(graph), {}});
    }
    // Next combination in lexicographic order.
    std::size_t i = k;
    while (i > 0 && combo[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  evaluate_all(evaluator, results, jobs);
  return results;
}

std::vector<EnumResult> enumerate_chains2(const Evaluator& evaluator, std::span<const double> grid,
                                          std::size_t jobs) {
  const auto& pool = evaluator.pool();
  if (pool.models.size() < 2) throw std::invalid_argument("chain enumeration needs two models");
  for (double t : grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("threshold grid values must be in [0, 1]");
  }
  std::vector<EnumResult> results;
  for (std::size_t a = 0; a < pool.models.size(); ++a) {
    for (std::size_t b = a + 1; b < pool.models.size(); ++b) {
      const auto* first = &pool.models[a];
      const auto* second = &pool.models[b];
      if (second->param_count < first->param_count ||
          (second->param_count == first->param_count && second->id < first->id)) {
        std::swap(first, second);
      }
      for (double t : grid) {
        results.push_back({Strategy::kChain2, {first->id, second->id}, std::nullopt, t,
                           make_chain({first->id, second->id}, {t}), {}});
      }
    }
  }
  evaluate_all(evaluator, results, jobs);
  return results;
}

std::vector<std::size_t> pareto_filter(const std::vector<Point>& points) {
  if (points.empty()) return {};
  return fast_nondominated_sort(points).front();
}

std::vector<EnumResult> pareto_filter(const std::vector<EnumResult>& results,
                                      std::span<const Objective> objectives) {
  std::vector<Point> points;
  points.reserve(results.size());
  for (const auto& r : results) points.push_back(project(r.objectives, objectives));
  std::vector<EnumResult> out;
  for (auto i : pareto_filter(points)) out.push_back(results[i]);
  return out;
}

void write_enum_csv(std::ostream& out, const std::vector<EnumResult>& results) {
  out << "strategy,members,protocol,tau,error,latency_s,size_params\n";
  for (const auto& r : results) {
    std::string members;
    for (const auto& m : r.members) members += (members.empty() ? "" : "+") + m;
    out << to_string(r.strategy) << ',' << csv_escape(members) << ','
        << (r.protocol ? std::string(to_string(*r.protocol)) : std::string()) << ','
        << (r.threshold ? format_real(*r.threshold) : std::string()) << ','
        << format_real(r.objectives.error) << ',' << format_real(r.objectives.latency) << ','
        << format_real(r.objectives.size) << '\n';
  }
}

}  // namespace earn
