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

#ifndef EARN_SEARCH_HPP_
#define EARN_SEARCH_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "earn/evaluator.hpp"
#include "earn/graph.hpp"
#include "earn/moo.hpp"
#include "earn/pool.hpp"
#include "earn/rng.hpp"

namespace earn {

struct EarnConfig {
  std::size_t population_limit = 500;  // M
  std::size_t offspring_limit = 200;   // C
  std::size_t tournament_size = 10;    // K
  double mutation_rate = 0.4;          // m_r; crossover rate is 1 - m_r
  double node_mutation_prob = 0.6;     // m_p
  std::size_t iterations = 100;        // I
  double threshold_step = 0.1;
  double initial_threshold = 0.5;
  std::size_t max_depth = kDefaultMaxDepth;
  // Stop early once relative hypervolume gain stays below hv_epsilon for
  // hv_patience consecutive generations.
  bool hv_stop = false;
  double hv_epsilon = 1e-4;
  std::size_t hv_patience = 10;
  // Protocol switches pick any other protocol instead of toggling weighting.
  bool mutate_all_protocols = false;
  std::uint64_t seed = 0;

  double crossover_rate() const { return 1.0 - mutation_rate; }
  // Throws std::invalid_argument on out-of-range fields.
  void check() const;
};

// JSON object with the field names above; absent fields keep `base` values.
EarnConfig parse_config(std::string_view json_text, EarnConfig base = {});
std::string config_to_json(const EarnConfig& config);

struct Individual {
  Node graph;
  StructuralHash hash;
  ObjectiveVector objectives;
  Point point;
  Fitness fitness;
};

// Tournament with replacement. Lower rank, then larger crowding, then lower
// hash wins.
const Individual& tournament_select(std::span<const Individual> population, std::size_t k, Rng& rng);

enum class SiteKind { kClassifier, kTrigger, kMerger };

// A mutable position. Path steps index merger children and chain stages.
// Trigger sites point at their chain and carry the threshold index.
struct Site {
  std::vector<std::size_t> path;
  SiteKind kind = SiteKind::kClassifier;
  bool in_chain = false;
  std::size_t trigger = 0;
};

enum class MutationOp {
  kAddModel,            // merger: append a random model
  kSwitchProtocol,      // merger: toggle weighting (or any protocol when configured)
  kIncrementThreshold,  // trigger: +threshold_step, clamped
  kDecrementThreshold,  // trigger: -threshold_step, clamped
  kReplaceModel,        // classifier: swap for a different model
  kExtendChain,         // classifier: attach a trigger-classifier pair after it
  kMergeWith,           // standalone classifier: average it with a random model
};

std::string_view to_string(MutationOp op);

// Pre-order list of every mutable site.
std::vector<Site> mutation_sites(const Node& root);
std::vector<MutationOp> site_operators(const Site& site);

// Applies one operator in place. Returns false, leaving `root` untouched,
// when the operator does not apply or would break max_depth. Merger weights
// are not refreshed; call Evaluator::assign_weights afterwards.
bool apply_mutation(Node& root, const Site& site, MutationOp op, const EarnConfig& config,
                    const ModelPool& pool, Rng& rng);

// Each site mutates with probability m_p. Walks that change nothing are
// repeated up to 10 times, then a single forced mutation is tried.
Node mutate(const Node& parent, const EarnConfig& config, const Evaluator& evaluator, Rng& rng);

// Subtree position: the root, a merger child, or a chain stage. Chain stage
// slots accept only classifiers.
struct Slot {
  std::vector<std::size_t> path;
  bool chain_stage = false;
};

std::vector<Slot> crossover_slots(const Node& root);
Node subtree_at(const Node& root, const Slot& slot);
void replace_subtree(Node& root, const Slot& slot, Node subtree);

// Single-point subtree swap between type-compatible slots. Falls back to
// clones of the parents when no compatible pair is found in 10 draws or a
// child would exceed max_depth.
std::pair<Node, Node> crossover(const Node& a, const Node& b, const EarnConfig& config,
                                const Evaluator& evaluator, Rng& rng);

// One evaluated single-classifier individual per pool model, with fitness.
std::vector<Individual> initialize(const Evaluator& evaluator);

// Computes rank and crowding over the whole set in place.
void assign_fitness(std::vector<Individual>& individuals);

// The M fittest of `candidates` (rank, crowding, hash; stable otherwise).
std::vector<Individual> select_survivors(std::vector<Individual> candidates, std::size_t limit);

struct GenerationRecord {
  std::size_t generation = 0;
  double best_error = 0.0;
  double hypervolume = 0.0;
  std::size_t archive_size = 0;
  std::size_t population_size = 0;
  std::size_t offspring = 0;
  std::size_t mutations = 0;
  std::size_t crossovers = 0;
  std::size_t evaluations = 0;  // cumulative offspring evaluations
  std::size_t cache_hits = 0;
  double cache_hit_rate = 0.0;
};

struct RunResult {
  std::vector<Individual> population;
  ParetoArchive archive;
  std::vector<GenerationRecord> history;
  Point reference;
  std::size_t offspring_evaluations = 0;
  bool stopped_on_hypervolume = false;
};

// Componentwise worst value scaled by 1.1 (1.0 where the worst is zero).
Point reference_point(std::span<const Individual> initial);

// Runs the evolutionary loop. The evaluation memo is private to the run;
// `jobs` caps evaluation threads and never changes the result.
RunResult run(const ModelPool& pool, const EarnConfig& config, const EvalContext& ctx,
              std::size_t jobs = 1);

}  // namespace earn

#endif  // EARN_SEARCH_HPP_
