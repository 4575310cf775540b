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

#ifndef EARN_GRAPH_HPP_
#define EARN_GRAPH_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "earn/pool.hpp"

namespace earn {

inline constexpr std::size_t kDefaultMaxDepth = 4;

enum class MergeProtocol {
  kAverage,
  kVoting,
  kMax,
  kWeightedAverage,
  kWeightedVoting,
  kWeightedMax,
};

inline constexpr MergeProtocol kAllProtocols[] = {
    MergeProtocol::kAverage,         MergeProtocol::kVoting,         MergeProtocol::kMax,
    MergeProtocol::kWeightedAverage, MergeProtocol::kWeightedVoting, MergeProtocol::kWeightedMax,
};

bool is_weighted(MergeProtocol protocol);
// average <-> weighted_average, voting <-> weighted_voting, max <-> weighted_max.
MergeProtocol toggle_weighted(MergeProtocol protocol);
std::string_view to_string(MergeProtocol protocol);
std::optional<MergeProtocol> parse_protocol(std::string_view name);

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Classifier {
  std::string model_id;

  bool operator==(const Classifier&) const = default;
};

// Early-exit chain. thresholds[i] gates stage i: a sample moves on to
// stage i+1 when thresholds[i] >= max(stage i output).
struct Chain {
  std::vector<Classifier> stages;
  std::vector<double> thresholds;

  bool operator==(const Chain&) const = default;
};

struct Node;

struct Merger {
  MergeProtocol protocol = MergeProtocol::kAverage;
  std::vector<Node> children;
  std::vector<double> weights;  // one per child iff the protocol is weighted
};

// The genome is a rooted tree; a whole ensemble is represented by its root.
struct Node {
  std::variant<Classifier, Chain, Merger> value;

  bool is_classifier() const { return std::holds_alternative<Classifier>(value); }
  bool is_chain() const { return std::holds_alternative<Chain>(value); }
  bool is_merger() const { return std::holds_alternative<Merger>(value); }
};

bool operator==(const Merger& a, const Merger& b);
bool operator==(const Node& a, const Node& b);

using EnsembleGraph = Node;

Node make_classifier(std::string model_id);
Node make_chain(std::vector<std::string> model_ids, std::vector<double> thresholds);
Node make_merger(MergeProtocol protocol, std::vector<Node> children,
                 std::vector<double> weights = {});

struct StructuralHash {
  std::uint64_t digest = 0;

  auto operator<=>(const StructuralHash&) const = default;
  std::string hex() const;
};

// Merger children are canonicalized by sorting (child hash, weight), so
// child order never changes the digest. Chain order does. Thresholds and
// weights are rounded to 1e-6 before hashing.
StructuralHash structural_hash(const Node& node);

// classifier = 1, chain = 2, merger = 1 + deepest child.
std::size_t depth(const Node& node);
std::size_t classifier_count(const Node& node);
// Model ids in pre-order, duplicates kept.
std::vector<std::string> model_ids(const Node& node);

struct Violation {
  std::string path;
  std::string message;
};

std::vector<Violation> validate(const Node& node, const ModelPool& pool,
                                std::size_t max_depth = kDefaultMaxDepth);
// Throws GraphError listing every violation.
void ensure_valid(const Node& node, const ModelPool& pool, std::size_t max_depth = kDefaultMaxDepth);

std::string serialize(const Node& node);
// Parses without pool checks; throws GraphError on malformed input.
Node parse_graph(std::string_view text);
Node deserialize(std::string_view text, const ModelPool& pool,
                 std::size_t max_depth = kDefaultMaxDepth);

}  // namespace earn

#endif  // EARN_GRAPH_HPP_
