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

#include "earn/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>
#include <unordered_set>

namespace earn {

namespace {

constexpr double kSammeEpsilon = 1e-6;

// Clamps negatives to zero and rescales to unit sum. A row with no
// positive mass becomes one-hot at its argmax.
void normalize(std::span<double> v) {
  const std::size_t best = argmax(v);
  double total = 0.0;
  for (double& x : v) {
    x = std::max(x, 0.0);
    total += x;
  }
  if (total > 0.0) {
    for (double& x : v) x /= total;
  } else {
    std::fill(v.begin(), v.end(), 0.0);
    v[best] = 1.0;
  }
}

}  // namespace

std::string_view to_string(Split split) {
  return split == Split::kValidation ? "validation" : "test";
}

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::kError: return "error";
    case Objective::kLatency: return "latency";
    case Objective::kSize: return "size";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::vector<Objective> parse_objectives(std::string_view list) {
  std::set<Objective> chosen;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = std::min(list.find(',', start), list.size());
    const auto name = list.substr(start, end - start);
    if (name == "error") {
      chosen.insert(Objective::kError);
    } else if (name == "latency") {
      chosen.insert(Objective::kLatency);
    } else if (name == "size") {
      chosen.insert(Objective::kSize);
    } else {
      throw std::invalid_argument("unknown objective '" + std::string(name) + "'");
    }
    start = end + 1;
  }
  return {chosen.begin(), chosen.end()};
}

Point project(const ObjectiveVector& v, std::span<const Objective> objectives) {
  Point p;
  p.reserve(objectives.size());
  for (auto o : objectives) {
    switch (o) {
      case Objective::kError: p.push_back(v.error); break;
      case Objective::kLatency: p.push_back(v.latency); break;
      case Objective::kSize: p.push_back(v.size); break;
    }
  }
  return p;
}

double samme_weight(double err, std::size_t n_classes) {
  const double e = std::clamp(err, kSammeEpsilon, 1.0 - kSammeEpsilon);
  return std::log((1.0 - e) / e) + std::log(static_cast<double>(n_classes) - 1.0);
}

std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

std::vector<std::size_t> canonical_child_order(const Merger& merger) {
  struct Key {
    StructuralHash hash;
    double weight;
    std::size_t index;
  };
  std::vector<Key> keys;
  keys.reserve(merger.children.size());
  for (std::size_t i = 0; i < merger.children.size(); ++i) {
    keys.push_back({structural_hash(merger.children[i]),
                    i < merger.weights.size() ? merger.weights[i] : 0.0, i});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.hash != b.hash) return a.hash < b.hash;
    return a.weight < b.weight;
  });
  std::vector<std::size_t> order;
  order.reserve(keys.size());
  for (const auto& k : keys) order.push_back(k.index);
  return order;
}

void merge_rows(MergeProtocol protocol, std::span<const std::span<const double>> child_rows,
                std::span<const double> weights, std::span<double> out) {
  const std::size_t n = child_rows.size();
  const std::size_t k = out.size();
  const double count = static_cast<double>(n);
  switch (protocol) {
    case MergeProtocol::kAverage:
      for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += child_rows[i][c];
        out[c] = sum / count;
      }
      return;
    case MergeProtocol::kVoting:
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) out[argmax(child_rows[i])] += 1.0;
      for (double& v : out) v /= count;
      return;
    case MergeProtocol::kMax:
      for (std::size_t c = 0; c < k; ++c) {
        double best = child_rows[0][c];
        for (std::size_t i = 1; i < n; ++i) best = std::max(best, child_rows[i][c]);
        out[c] = best;
      }
      break;
    case MergeProtocol::kWeightedAverage:
      for (std::size_t c = 0; c < k; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += weights[i] * child_rows[i][c];
        out[c] = sum;
      }
      break;
    case MergeProtocol::kWeightedVoting:
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) out[argmax(child_rows[i])] += weights[i];
      break;
    case MergeProtocol::kWeightedMax:
      for (std::size_t c = 0; c < k; ++c) {
        double best = weights[0] * child_rows[0][c];
        for (std::size_t i = 1; i < n; ++i) best = std::max(best, weights[i] * child_rows[i][c]);
        out[c] = best;
      }
      break;
  }
  normalize(out);
}

Evaluator::Evaluator(const ModelPool& pool, EvalContext ctx) : pool_(&pool), ctx_(std::move(ctx)) {
  if (pool.models.empty()) throw PoolError("evaluator: pool has no models");
  if (!pool.has_platform(ctx_.platform)) {
    throw PoolError("unknown platform '" + ctx_.platform + "'");
  }
  if (ctx_.objectives.empty()) throw std::invalid_argument("at least one objective is required");
  auto to_matrix = [](const PredictionSet& set) {
    auto m = std::make_shared<Matrix>();
    m->rows = set.n_samples;
    m->cols = set.n_classes;
    m->data.assign(set.probs.begin(), set.probs.end());
    return std::shared_ptr<const Matrix>(std::move(m));
  };
  for (std::size_t i = 0; i < pool.models.size(); ++i) {
    const auto& m = pool.models[i];
    index_.emplace(m.id, i);
    latency_.push_back(m.latencies.at(ctx_.platform));
    validation_.push_back(to_matrix(m.validation));
    test_.push_back(to_matrix(m.test));
  }
}

std::size_t Evaluator::n_samples(Split split) const {
  const auto& m = pool_->models.front();
  return split == Split::kValidation ? m.validation.n_samples : m.test.n_samples;
}

std::size_t Evaluator::model_index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("unknown model '" + id + "'");
  return it->second;
}

const std::shared_ptr<const Matrix>& Evaluator::matrix(std::size_t model, Split split) const {
  return split == Split::kValidation ? validation_[model] : test_[model];
}

double Evaluator::error_of(const Matrix& probs, Split split) const {
  const auto& first = pool_->models.front();
  const auto& labels = split == Split::kValidation ? first.validation.labels : first.test.labels;
  if (probs.rows == 0) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    if (argmax(probs.row(i)) != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(probs.rows);
}

double Evaluator::size_of(const Node& node) const {
  const auto ids = model_ids(node);
  double size = 0.0;
  if (ctx_.size_per_node) {
    for (const auto& id : ids) size += static_cast<double>(pool_->models[model_index(id)].param_count);
    return size;
  }
  const std::set<std::string> distinct(ids.begin(), ids.end());
  for (const auto& id : distinct) size += static_cast<double>(pool_->models[model_index(id)].param_count);
  return size;
}

Evaluator::Eval Evaluator::run(const Node& node, Split split,
                               std::vector<ClassifierActivation>* activations) const {
  const std::size_t n = n_samples(split);
  if (const auto* c = std::get_if<Classifier>(&node.value)) {
    const auto m = model_index(c->model_id);
    if (activations) activations->push_back({c->model_id, std::vector<std::uint8_t>(n, 1), n});
    return {matrix(m, split), latency_[m]};
  }

  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    const std::size_t k = chain->stages.size();
    std::vector<const Matrix*> stages(k);
    std::vector<std::size_t> models(k);
    for (std::size_t s = 0; s < k; ++s) {
      models[s] = model_index(chain->stages[s].model_id);
      stages[s] = matrix(models[s], split).get();
    }
    auto out = std::make_shared<Matrix>();
    out->rows = n;
    out->cols = pool_->n_classes;
    out->data.resize(n * out->cols);
    std::vector<std::size_t> reached(k, 0);
    std::vector<std::vector<std::uint8_t>> masks;
    if (activations) masks.assign(k, std::vector<std::uint8_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t s = 0;
      for (;; ++s) {
        ++reached[s];
        if (activations) masks[s][i] = 1;
        if (s + 1 == k) break;
        const auto row = stages[s]->row(i);
        if (chain->thresholds[s] < *std::max_element(row.begin(), row.end())) break;
      }
      const auto src = stages[s]->row(i);
      std::copy(src.begin(), src.end(), out->row(i).begin());
    }
    double latency = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      latency += static_cast<double>(reached[s]) / static_cast<double>(n) * latency_[models[s]];
      if (activations) {
        activations->push_back({chain->stages[s].model_id, std::move(masks[s]), reached[s]});
      }
    }
    return {std::move(out), latency};
  }

  const auto& merger = std::get<Merger>(node.value);
  std::vector<Eval> children;
  children.reserve(merger.children.size());
  for (const auto& child : merger.children) children.push_back(run(child, split, activations));

  const auto order = canonical_child_order(merger);
  std::vector<double> weights;
  if (is_weighted(merger.protocol)) {
    for (auto i : order) weights.push_back(merger.weights.at(i));
  }
  double latency = 0.0;
  for (auto i : order) latency += children[i].latency;

  auto out = std::make_shared<Matrix>();
  out->rows = n;
  out->cols = pool_->n_classes;
  out->data.resize(n * out->cols);
  std::vector<std::span<const double>> rows(order.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < order.size(); ++j) rows[j] = children[order[j]].probs->row(r);
    merge_rows(merger.protocol, rows, weights, out->row(r));
  }
  return {std::move(out), latency};
}

Prediction Evaluator::predict(const Node& node, Split split) const {
  Prediction p;
  auto eval = run(node, split, &p.activations);
  p.probs = std::move(eval.probs);
  return p;
}

ObjectiveVector Evaluator::evaluate_uncached(const Node& node) const {
  const auto eval = run(node, ctx_.split, nullptr);
  return {error_of(*eval.probs, ctx_.split), eval.latency, size_of(node)};
}

ObjectiveVector Evaluator::evaluate(const Node& node) const {
  const auto key = structural_hash(node).digest;
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++stats_.hits;
      return it->second;
    }
  }
  const auto result = evaluate_uncached(node);
  std::lock_guard lock(mutex_);
  ++stats_.misses;
  cache_.emplace(key, result);
  return result;
}

std::vector<ObjectiveVector> Evaluator::evaluate_batch(std::span<const Node> nodes, std::size_t jobs,
                                                       CacheStats* stats) const {
  std::vector<ObjectiveVector> results(nodes.size());
  std::vector<std::uint64_t> keys(nodes.size());
  std::vector<std::size_t> pending;
  CacheStats local;
  {
    std::unordered_set<std::uint64_t> seen;
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      keys[i] = structural_hash(nodes[i]).digest;
      if (cache_.count(keys[i]) || !seen.insert(keys[i]).second) {
        ++local.hits;
      } else {
        ++local.misses;
        pending.push_back(i);
      }
    }
  }

  std::vector<ObjectiveVector> fresh(pending.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, pending.size()));
  if (workers <= 1) {
    for (std::size_t j = 0; j < pending.size(); ++j) fresh[j] = evaluate_uncached(nodes[pending[j]]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (std::size_t j = next++; j < pending.size(); j = next++) {
          fresh[j] = evaluate_uncached(nodes[pending[j]]);
        }
      });
    }
  }

  std::lock_guard lock(mutex_);
  for (std::size_t j = 0; j < pending.size(); ++j) cache_.emplace(keys[pending[j]], fresh[j]);
  for (std::size_t i = 0; i < nodes.size(); ++i) results[i] = cache_.at(keys[i]);
  stats_.hits += local.hits;
  stats_.misses += local.misses;
  if (stats) *stats = local;
  return results;
}

double Evaluator::validation_error(const Node& node) const {
  const auto key = structural_hash(node).digest;
  {
    std::lock_guard lock(mutex_);
    if (auto it = validation_errors_.find(key); it != validation_errors_.end()) return it->second;
  }
  const auto eval = run(node, Split::kValidation, nullptr);
  const double err = error_of(*eval.probs, Split::kValidation);
  std::lock_guard lock(mutex_);
  validation_errors_.emplace(key, err);
  return err;
}

std::vector<double> Evaluator::samme_weights(const Merger& merger) const {
  std::vector<double> weights;
  weights.reserve(merger.children.size());
  for (const auto& child : merger.children) {
    weights.push_back(samme_weight(validation_error(child), pool_->n_classes));
  }
  return weights;
}

void Evaluator::assign_weights(Node& node) const {
  auto* merger = std::get_if<Merger>(&node.value);
  if (!merger) return;
  for (auto& child : merger->children) assign_weights(child);
  if (is_weighted(merger->protocol)) {
    merger->weights = samme_weights(*merger);
  } else {
    merger->weights.clear();
  }
}

CacheStats Evaluator::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

bool has_negative_weights(const Node& node) {
  const auto* merger = std::get_if<Merger>(&node.value);
  if (!merger) return false;
  for (double w : merger->weights) {
    if (w < 0.0) return true;
  }
  return std::any_of(merger->children.begin(), merger->children.end(),
                     [](const Node& child) { return has_negative_weights(child); });
}

}  // namespace earn
