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

#include "testing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

namespace earn::testing {

namespace fs = std::filesystem;

ModelPool make_pool(const std::vector<ModelSpec>& models, const std::vector<std::uint32_t>& labels,
                    std::size_t n_classes) {
  ModelPool pool;
  pool.dataset = "fixture";
  pool.n_classes = n_classes;
  pool.platforms = {"cpu"};
  for (const auto& spec : models) {
    ModelRecord m;
    m.id = spec.id;
    m.param_count = spec.params;
    m.latencies["cpu"] = spec.latency;
    PredictionSet set;
    set.n_samples = spec.rows.size();
    set.n_classes = n_classes;
    for (const auto& row : spec.rows) set.probs.insert(set.probs.end(), row.begin(), row.end());
    set.labels = labels;
    m.validation = set;
    m.test = set;
    pool.models.push_back(std::move(m));
  }
  return pool;
}

namespace {

std::size_t first_max(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c) {
    if (v[c] > v[best]) best = c;
  }
  return best;
}

void clamp_and_rescale(std::vector<double>& v) {
  const std::size_t top = first_max(v);
  double total = 0.0;
  for (auto& x : v) {
    if (x < 0.0) x = 0.0;
    total += x;
  }
  if (total == 0.0) {
    v.assign(v.size(), 0.0);
    v[top] = 1.0;
    return;
  }
  for (auto& x : v) x /= total;
}

class Walker {
 public:
  Walker(const ModelPool& pool, Split split) : pool_(pool), split_(split) {}

  std::vector<double> row(const std::string& id, std::size_t s) const {
    const auto& m = pool_.models[*pool_.index_of(id)];
    const auto& set = split_ == Split::kValidation ? m.validation : m.test;
    std::vector<double> out(set.n_classes);
    for (std::size_t c = 0; c < set.n_classes; ++c) out[c] = set.probs[s * set.n_classes + c];
    return out;
  }

  // Returns the output for sample s; marks reached classifier slots in pre-order.
  std::vector<double> walk(const Node& node, std::size_t s, std::size_t& slot,
                           std::vector<std::uint8_t*>& reached) const {
    if (const auto* c = std::get_if<Classifier>(&node.value)) {
      reached[slot++][s] = 1;
      return row(c->model_id, s);
    }
    if (const auto* chain = std::get_if<Chain>(&node.value)) {
      std::vector<double> out;
      bool done = false;
      for (std::size_t i = 0; i < chain->stages.size(); ++i) {
        if (done) {
          ++slot;
          continue;
        }
        reached[slot++][s] = 1;
        out = row(chain->stages[i].model_id, s);
        const double top = *std::max_element(out.begin(), out.end());
        if (i + 1 < chain->stages.size() && !(chain->thresholds[i] >= top)) done = true;
      }
      return out;
    }
    const auto& merger = std::get<Merger>(node.value);
    std::vector<std::vector<double>> child_out;
    for (const auto& child : merger.children) child_out.push_back(walk(child, s, slot, reached));
    const std::size_t k = child_out.front().size();
    const auto order = canonical_child_order(merger);
    const double n = static_cast<double>(order.size());
    std::vector<double> out(k, 0.0);
    auto weight = [&](std::size_t i) { return merger.weights.at(i); };
    switch (merger.protocol) {
      case MergeProtocol::kAverage:
        for (std::size_t c = 0; c < k; ++c) {
          double total = 0.0;
          for (auto i : order) total += child_out[i][c];
          out[c] = total / n;
        }
        return out;
      case MergeProtocol::kVoting:
        for (auto i : order) out[first_max(child_out[i])] += 1.0;
        for (auto& x : out) x /= n;
        return out;
      case MergeProtocol::kMax:
        for (std::size_t c = 0; c < k; ++c) {
          out[c] = child_out[order[0]][c];
          for (auto i : order) out[c] = std::max(out[c], child_out[i][c]);
        }
        break;
      case MergeProtocol::kWeightedAverage:
        for (std::size_t c = 0; c < k; ++c) {
          double total = 0.0;
          for (auto i : order) total += weight(i) * child_out[i][c];
          out[c] = total;
        }
        break;
      case MergeProtocol::kWeightedVoting:
        for (auto i : order) out[first_max(child_out[i])] += weight(i);
        break;
      case MergeProtocol::kWeightedMax:
        for (std::size_t c = 0; c < k; ++c) {
          out[c] = weight(order[0]) * child_out[order[0]][c];
          for (auto i : order) out[c] = std::max(out[c], weight(i) * child_out[i][c]);
        }
        break;
    }
    clamp_and_rescale(out);
    return out;
  }

 private:
  const ModelPool& pool_;
  Split split_;
};

void collect_models(const Node& node, std::vector<std::string>& out) {
  if (const auto* c = std::get_if<Classifier>(&node.value)) {
    out.push_back(c->model_id);
  } else if (const auto* chain = std::get_if<Chain>(&node.value)) {
    for (const auto& s : chain->stages) out.push_back(s.model_id);
  } else {
    for (const auto& child : std::get<Merger>(node.value).children) collect_models(child, out);
  }
}

}  // namespace

OracleResult oracle_walk(const ModelPool& pool, const Node& graph, Split split,
                         const std::string& platform, bool size_per_node) {
  OracleResult r;
  collect_models(graph, r.node_models);
  const auto& first = pool.models.front();
  const auto& set = split == Split::kValidation ? first.validation : first.test;
  const std::size_t n = set.n_samples;
  r.reached.assign(r.node_models.size(), std::vector<std::uint8_t>(n, 0));
  std::vector<std::uint8_t*> slots;
  for (auto& v : r.reached) slots.push_back(v.data());

  const Walker walker(pool, split);
  std::size_t wrong = 0;
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t slot = 0;
    r.outputs.push_back(walker.walk(graph, s, slot, slots));
    if (first_max(r.outputs.back()) != set.labels[s]) ++wrong;
  }
  r.error = static_cast<double>(wrong) / static_cast<double>(n);

  std::set<std::string> distinct;
  for (std::size_t i = 0; i < r.node_models.size(); ++i) {
    const auto& m = pool.models[*pool.index_of(r.node_models[i])];
    std::size_t hits = 0;
    for (auto b : r.reached[i]) hits += b;
    const double fraction = static_cast<double>(hits) / static_cast<double>(n);
    r.fractions.push_back(fraction);
    r.latency += fraction * m.latencies.at(platform);
    if (size_per_node || distinct.insert(m.id).second) r.size += static_cast<double>(m.param_count);
  }
  return r;
}

double oracle_validation_error(const ModelPool& pool, const Node& graph) {
  return oracle_walk(pool, graph, Split::kValidation, pool.platforms.front()).error;
}

namespace {

Node random_node(const ModelPool& pool, Rng& rng, std::size_t budget) {
  auto model = [&] { return pool.models[rng.index(pool.models.size())].id; };
  auto threshold = [&] {
    switch (rng.index(4)) {
      case 0: return 0.0;
      case 1: return 1.0;
      case 2: return static_cast<double>(rng.index(101)) / 100.0;
      default: return rng.uniform();
    }
  };
  const double r = rng.uniform();
  if (budget < 2 || r < 0.3) return make_classifier(model());
  if (r < 0.6) {
    const std::size_t stages = 2 + rng.index(3);
    std::vector<std::string> ids;
    std::vector<double> taus;
    for (std::size_t i = 0; i < stages; ++i) ids.push_back(model());
    for (std::size_t i = 0; i + 1 < stages; ++i) taus.push_back(threshold());
    return make_chain(ids, taus);
  }
  const std::size_t arity = 2 + rng.index(3);
  std::vector<Node> children;
  for (std::size_t i = 0; i < arity; ++i) children.push_back(random_node(pool, rng, budget - 1));
  const auto protocol = kAllProtocols[rng.index(std::size(kAllProtocols))];
  std::vector<double> weights;
  if (is_weighted(protocol)) weights.assign(arity, 1.0);
  return make_merger(protocol, std::move(children), std::move(weights));
}

}  // namespace

Node random_graph(const ModelPool& pool, Rng& rng, std::size_t max_depth) {
  return random_node(pool, rng, max_depth);
}

bool weakly_dominates(const Point& a, const Point& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
  }
  return true;
}

std::vector<std::vector<std::size_t>> brute_force_fronts(const std::vector<Point>& points) {
  auto strictly = [](const Point& a, const Point& b) { return weakly_dominates(a, b) && a != b; };
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<bool> taken(points.size(), false);
  std::size_t left = points.size();
  while (left > 0) {
    std::vector<std::size_t> front;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (taken[i]) continue;
      bool dominated = false;
      for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
        dominated = !taken[j] && strictly(points[j], points[i]);
      }
      if (!dominated) front.push_back(i);
    }
    for (auto i : front) taken[i] = true;
    left -= front.size();
    fronts.push_back(std::move(front));
  }
  return fronts;
}

double grid_hypervolume(const std::vector<Point>& points, const Point& reference) {
  const std::size_t d = reference.size();
  std::vector<std::vector<double>> axes(d);
  for (std::size_t k = 0; k < d; ++k) {
    std::set<double> values{reference[k]};
    for (const auto& p : points) values.insert(p[k]);
    axes[k].assign(values.begin(), values.end());
  }
  long double total = 0;
  std::vector<std::size_t> cell(d, 0);
  while (true) {
    bool valid = true;
    for (std::size_t k = 0; k < d; ++k) valid = valid && cell[k] + 1 < axes[k].size();
    if (valid) {
      Point corner(d);
      long double volume = 1;
      for (std::size_t k = 0; k < d; ++k) {
        corner[k] = axes[k][cell[k]];
        volume *= axes[k][cell[k] + 1] - axes[k][cell[k]];
      }
      for (const auto& p : points) {
        if (weakly_dominates(p, corner)) {
          total += volume;
          break;
        }
      }
    }
    std::size_t k = 0;
    while (k < d && ++cell[k] == axes[k].size()) cell[k++] = 0;
    if (k == d) break;
  }
  return static_cast<double>(total);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("earn-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

}  // namespace earn::testing
