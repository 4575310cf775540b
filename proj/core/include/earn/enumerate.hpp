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

#ifndef EARN_ENUMERATE_HPP_
#define EARN_ENUMERATE_HPP_

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "earn/evaluator.hpp"
#include "earn/graph.hpp"

namespace earn {

enum class Strategy { kSingle, kBagging, kBoosting, kChain2 };

std::string_view to_string(Strategy strategy);

struct EnumResult {
  Strategy strategy = Strategy::kSingle;
  std::vector<std::string> members;
  std::optional<MergeProtocol> protocol;
  std::optional<double> threshold;
  Node graph;
  ObjectiveVector objectives;
};

// {0.00, 0.01, ..., 0.99}.
std::vector<double> default_threshold_grid();
std::vector<double> threshold_grid(double step, bool include_one = false);

std::vector<EnumResult> enumerate_singles(const Evaluator& evaluator);

// One ensemble per k-combination of distinct models and per protocol, in
// lexicographic pool order, then protocol order. Weighted protocols get
// SAMME weights.
std::vector<EnumResult> enumerate_merged(const Evaluator& evaluator, std::size_t k,
                                         std::span<const MergeProtocol> protocols,
                                         std::size_t jobs = 1);

// Every unordered pair, smaller model first (param count, then id), one
// chain per grid threshold.
std::vector<EnumResult> enumerate_chains2(const Evaluator& evaluator, std::span<const double> grid,
                                          std::size_t jobs = 1);

// Indices of the rank-0 points.
std::vector<std::size_t> pareto_filter(const std::vector<Point>& points);
std::vector<EnumResult> pareto_filter(const std::vector<EnumResult>& results,
                                      std::span<const Objective> objectives);

// strategy,members,protocol,tau,error,latency_s,size_params
void write_enum_csv(std::ostream& out, const std::vector<EnumResult>& results);

}  // namespace earn

#endif  // EARN_ENUMERATE_HPP_
