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

#include "earn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

namespace earn {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t seed, std::uint64_t value) {
  return mix(seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::uint64_t quantize(double v) {
  return static_cast<std::uint64_t>(std::llround(v * 1e6));
}

enum : std::uint64_t { kTagClassifier = 1, kTagChain = 2, kTagMerger = 3, kTagNoWeight = 4 };

std::uint64_t hash_node(const Node& node);

std::uint64_t hash_classifier(const Classifier& c) {
  return combine(kTagClassifier, fnv1a(c.model_id));
}

std::uint64_t hash_node(const Node& node) {
  if (const auto* c = std::get_if<Classifier>(&node.value)) return hash_classifier(*c);
  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    std::uint64_t h = combine(kTagChain, chain->stages.size());
    for (const auto& stage : chain->stages) h = combine(h, hash_classifier(stage));
    for (double t : chain->thresholds) h = combine(h, quantize(t));
    return h;
  }
  const auto& merger = std::get<Merger>(node.value);
  std::vector<std::pair<std::uint64_t, std::uint64_t>> parts;
  parts.reserve(merger.children.size());
  for (std::size_t i = 0; i < merger.children.size(); ++i) {
    const std::uint64_t w = i < merger.weights.size() ? quantize(merger.weights[i]) : kTagNoWeight;
    parts.emplace_back(hash_node(merger.children[i]), w);
  }
  std::sort(parts.begin(), parts.end());
  std::uint64_t h = combine(kTagMerger, static_cast<std::uint64_t>(merger.protocol));
  h = combine(h, parts.size());
  for (const auto& [child, w] : parts) h = combine(combine(h, child), w);
  return h;
}

void collect_violations(const Node& node, const ModelPool& pool, const std::string& path,
                        std::vector<Violation>& out) {
  auto check_model = [&](const Classifier& c, const std::string& where) {
    if (!pool.index_of(c.model_id)) {
      out.push_back({where, "unknown model '" + c.model_id + "'"});
    }
  };
  if (const auto* c = std::get_if<Classifier>(&node.value)) {
    check_model(*c, path);
    return;
  }
  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    if (chain->stages.size() < 2) out.push_back({path, "chain requires >= 2 stages"});
    if (chain->thresholds.size() + 1 != chain->stages.size()) {
      out.push_back({path, "chain has " + std::to_string(chain->stages.size()) + " stages but " +
                               std::to_string(chain->thresholds.size()) + " thresholds"});
    }
    for (std::size_t i = 0; i < chain->thresholds.size(); ++i) {
      const double t = chain->thresholds[i];
      if (!(t >= 0.0 && t <= 1.0)) {
        out.push_back({path + "/thresholds[" + std::to_string(i) + "]", "threshold outside [0, 1]"});
      }
    }
    for (std::size_t i = 0; i < chain->stages.size(); ++i) {
      check_model(chain->stages[i], path + "/stages[" + std::to_string(i) + "]");
    }
    return;
  }
  const auto& merger = std::get<Merger>(node.value);
  if (merger.children.size() < 2) out.push_back({path, "merger requires >= 2 children"});
  if (is_weighted(merger.protocol)) {
    if (merger.weights.size() != merger.children.size()) {
      out.push_back({path, std::string(to_string(merger.protocol)) + " requires one weight per child"});
    }
    for (double w : merger.weights) {
      if (!std::isfinite(w)) {
        out.push_back({path, "non-finite weight"});
        break;
      }
    }
  } else if (!merger.weights.empty()) {
    out.push_back({path, std::string(to_string(merger.protocol)) + " takes no weights"});
  }
  for (std::size_t i = 0; i < merger.children.size(); ++i) {
    collect_violations(merger.children[i], pool, path + "/children[" + std::to_string(i) + "]", out);
  }
}

json to_json(const Node& node) {
  if (const auto* c = std::get_if<Classifier>(&node.value)) {
    return {{"kind", "classifier"}, {"model", c->model_id}};
  }
  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    json stages = json::array();
    for (const auto& s : chain->stages) stages.push_back({{"kind", "classifier"}, {"model", s.model_id}});
    return {{"kind", "chain"}, {"stages", stages}, {"thresholds", chain->thresholds}};
  }
  const auto& merger = std::get<Merger>(node.value);
  json children = json::array();
  for (const auto& child : merger.children) children.push_back(to_json(child));
  json out = {{"kind", "merger"}, {"protocol", std::string(to_string(merger.protocol))},
              {"children", children}};
  if (!merger.weights.empty()) out["weights"] = merger.weights;
  return out;
}

Node from_json(const json& j) {
  if (!j.is_object()) throw GraphError("node must be a JSON object");
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) throw GraphError("node lacks a string 'kind'");
  const auto kind = kind_it->get<std::string>();
  if (kind == "classifier") {
    return make_classifier(j.at("model").get<std::string>());
  }
  if (kind == "chain") {
    Chain chain;
    for (const auto& s : j.at("stages")) {
      Node stage = from_json(s);
      if (!stage.is_classifier()) throw GraphError("chain stages must be classifiers");
      chain.stages.push_back(std::get<Classifier>(std::move(stage.value)));
    }
    chain.thresholds = j.at("thresholds").get<std::vector<double>>();
    return Node{std::move(chain)};
  }
  if (kind == "merger") {
    const auto name = j.at("protocol").get<std::string>();
    const auto protocol = parse_protocol(name);
    if (!protocol) throw GraphError("unknown merge protocol '" + name + "'");
    Merger merger;
    merger.protocol = *protocol;
    for (const auto& c : j.at("children")) merger.children.push_back(from_json(c));
    if (auto w = j.find("weights"); w != j.end() && !w->is_null()) {
      merger.weights = w->get<std::vector<double>>();
    }
    return Node{std::move(merger)};
  }
  throw GraphError("unknown node kind '" + kind + "'");
}

}  // namespace

bool is_weighted(MergeProtocol protocol) {
  return protocol == MergeProtocol::kWeightedAverage || protocol == MergeProtocol::kWeightedVoting ||
         protocol == MergeProtocol::kWeightedMax;
}

MergeProtocol toggle_weighted(MergeProtocol protocol) {
  switch (protocol) {
    case MergeProtocol::kAverage: return MergeProtocol::kWeightedAverage;
    case MergeProtocol::kVoting: return MergeProtocol::kWeightedVoting;
    case MergeProtocol::kMax: return MergeProtocol::kWeightedMax;
    case MergeProtocol::kWeightedAverage: return MergeProtocol::kAverage;
    case MergeProtocol::kWeightedVoting: return MergeProtocol::kVoting;
    case MergeProtocol::kWeightedMax: return MergeProtocol::kMax;
  }
  return protocol;
}

std::string_view to_string(MergeProtocol protocol) {
  switch (protocol) {
    case MergeProtocol::kAverage: return "average";
    case MergeProtocol::kVoting: return "voting";
    case MergeProtocol::kMax: return "max";
    case MergeProtocol::kWeightedAverage: return "weighted_average";
    case MergeProtocol::kWeightedVoting: return "weighted_voting";
    case MergeProtocol::kWeightedMax: return "weighted_max";
  }
  return "?";
}

std::optional<MergeProtocol> parse_protocol(std::string_view name) {
  for (auto p : kAllProtocols) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

bool operator==(const Merger& a, const Merger& b) {
  return a.protocol == b.protocol && a.children == b.children && a.weights == b.weights;
}

bool operator==(const Node& a, const Node& b) { return a.value == b.value; }

Node make_classifier(std::string model_id) { return Node{Classifier{std::move(model_id)}}; }

Node make_chain(std::vector<std::string> model_ids, std::vector<double> thresholds) {
  Chain chain;
  for (auto& id : model_ids) chain.stages.push_back(Classifier{std::move(id)});
  chain.thresholds = std::move(thresholds);
  return Node{std::move(chain)};
}

Node make_merger(MergeProtocol protocol, std::vector<Node> children, std::vector<double> weights) {
  return Node{Merger{protocol, std::move(children), std::move(weights)}};
}

std::string StructuralHash::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

StructuralHash structural_hash(const Node& node) { return {hash_node(node)}; }

std::size_t depth(const Node& node) {
  if (node.is_classifier()) return 1;
  if (node.is_chain()) return 2;
  std::size_t deepest = 0;
  for (const auto& child : std::get<Merger>(node.value).children) deepest = std::max(deepest, depth(child));
  return 1 + deepest;
}

std::size_t classifier_count(const Node& node) {
  if (node.is_classifier()) return 1;
  if (const auto* chain = std::get_if<Chain>(&node.value)) return chain->stages.size();
  std::size_t n = 0;
  for (const auto& child : std::get<Merger>(node.value).children) n += classifier_count(child);
  return n;
}

std::vector<std::string> model_ids(const Node& node) {
  std::vector<std::string> out;
  auto walk = [&out](const auto& self, const Node& n) -> void {
    if (const auto* c = std::get_if<Classifier>(&n.value)) {
      out.push_back(c->model_id);
    } else if (const auto* chain = std::get_if<Chain>(&n.value)) {
      for (const auto& s : chain->stages) out.push_back(s.model_id);
    } else {
      for (const auto& child : std::get<Merger>(n.value).children) self(self, child);
    }
  };
  walk(walk, node);
  return out;
}

std::vector<Violation> validate(const Node& node, const ModelPool& pool, std::size_t max_depth) {
  std::vector<Violation> out;
  collect_violations(node, pool, "root", out);
  if (const auto d = depth(node); d > max_depth) {
    out.push_back({"root", "depth " + std::to_string(d) + " exceeds maximum " + std::to_string(max_depth)});
  }
  return out;
}

void ensure_valid(const Node& node, const ModelPool& pool, std::size_t max_depth) {
  const auto violations = validate(node, pool, max_depth);
  if (violations.empty()) return;
  std::string message = "invalid ensemble graph:";
  for (const auto& v : violations) message += "\n  " + v.path + ": " + v.message;
  throw GraphError(message);
}

std::string serialize(const Node& node) { return to_json(node).dump(); }

Node parse_graph(std::string_view text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw GraphError(std::string("malformed graph JSON: ") + e.what());
  }
}

Node deserialize(std::string_view text, const ModelPool& pool, std::size_t max_depth) {
  Node node = parse_graph(text);
  ensure_valid(node, pool, max_depth);
  return node;
}

}  // namespace earn
