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

#ifndef EARN_EVALUATOR_HPP_
#define EARN_EVALUATOR_HPP_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "earn/graph.hpp"
#include "earn/pool.hpp"

namespace earn {

enum class Split { kValidation, kTest };
enum class Objective { kError, kLatency, kSize };

std::string_view to_string(Split split);
std::string_view to_string(Objective objective);
Split parse_split(std::string_view name);
// Comma-separated subset of {error, latency, size}; order is normalized.
std::vector<Objective> parse_objectives(std::string_view list);

// All three objectives are minimized.
struct ObjectiveVector {
  double error = 0.0;    // 1 - accuracy on the evaluated split
  double latency = 0.0;  // expected seconds per 128-sample batch
  double size = 0.0;     // parameter count

  bool operator==(const ObjectiveVector&) const = default;
};

using Point = std::vector<double>;
Point project(const ObjectiveVector& v, std::span<const Objective> objectives);

struct EvalContext {
  Split split = Split::kValidation;
  std::string platform;
  std::vector<Objective> objectives = {Objective::kError, Objective::kLatency, Objective::kSize};
  // Count params once per classifier node instead of once per distinct model.
  bool size_per_node = false;
};

// sigma = ln((1 - err) / err) + ln(n_classes - 1), err clamped to [1e-6, 1 - 1e-6].
double samme_weight(double err, std::size_t n_classes);

// Row-major probability rows.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

// Lowest index wins ties.
std::size_t argmax(std::span<const double> row);

struct ClassifierActivation {
  std::string model_id;
  std::vector<std::uint8_t> mask;  // 1 where the sample reached this node
  std::size_t activated = 0;
};

struct Prediction {
  std::shared_ptr<const Matrix> probs;
  std::vector<ClassifierActivation> activations;  // classifier nodes in pre-order
};

// Merger children are combined in ascending (child hash, weight) order so
// the floating-point result never depends on how children are listed.
std::vector<std::size_t> canonical_child_order(const Merger& merger);

// Combines one sample's child rows under a protocol. `child_rows[i]` and
// `weights[i]` follow the canonical child order.
void merge_rows(MergeProtocol protocol, std::span<const std::span<const double>> child_rows,
                std::span<const double> weights, std::span<double> out);

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
};

// Evaluates ensembles against one pool, split and platform. Pure apart from
// its memo tables, which are safe under concurrent use.
class Evaluator {
 public:
  Evaluator(const ModelPool& pool, EvalContext ctx);

  const ModelPool& pool() const { return *pool_; }
  const EvalContext& context() const { return ctx_; }
  std::size_t n_samples(Split split) const;

  Prediction predict(const Node& node) const { return predict(node, ctx_.split); }
  Prediction predict(const Node& node, Split split) const;

  // Memoized by structural hash.
  ObjectiveVector evaluate(const Node& node) const;
  ObjectiveVector evaluate_uncached(const Node& node) const;

  // Evaluates in order, running cache misses on up to `jobs` threads. Hit
  // accounting is independent of `jobs`: duplicates within the batch count
  // as hits after their first occurrence.
  std::vector<ObjectiveVector> evaluate_batch(std::span<const Node> nodes, std::size_t jobs,
                                              CacheStats* stats = nullptr) const;

  // Validation error of a subtree, memoized by structural hash.
  double validation_error(const Node& node) const;
  std::vector<double> samme_weights(const Merger& merger) const;
  // Recomputes the weights of every weighted merger in `node`, bottom-up.
  void assign_weights(Node& node) const;

  CacheStats stats() const;

 private:
  struct Eval {
    std::shared_ptr<const Matrix> probs;
    double latency = 0.0;
  };

  Eval run(const Node& node, Split split, std::vector<ClassifierActivation>* activations) const;
  std::size_t model_index(const std::string& id) const;
  const std::shared_ptr<const Matrix>& matrix(std::size_t model, Split split) const;
  double error_of(const Matrix& probs, Split split) const;
  double size_of(const Node& node) const;

  const ModelPool* pool_;
  EvalContext ctx_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> latency_;
  std::vector<std::shared_ptr<const Matrix>> validation_;
  std::vector<std::shared_ptr<const Matrix>> test_;

  mutable std::mutex mutex_;
  mutable std::unordered_map<std::uint64_t, ObjectiveVector> cache_;
  mutable std::unordered_map<std::uint64_t, double> validation_errors_;
  mutable CacheStats stats_;
};

// True if any weighted merger in the tree carries a negative weight.
bool has_negative_weights(const Node& node);

}  // namespace earn

#endif  // EARN_EVALUATOR_HPP_
