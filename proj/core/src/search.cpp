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

#include "earn/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace earn {

namespace {

using json = nlohmann::json;

constexpr std::size_t kMaxAttempts = 10;

Node& node_at(Node& root, std::span<const std::size_t> path) {
  Node* node = &root;
  for (auto step : path) node = &std::get<Merger>(node->value).children.at(step);
  return *node;
}

const Node& node_at(const Node& root, std::span<const std::size_t> path) {
  const Node* node = &root;
  for (auto step : path) node = &std::get<Merger>(node->value).children.at(step);
  return *node;
}

void collect_sites(const Node& node, std::vector<std::size_t>& path, std::vector<Site>& out) {
  if (node.is_classifier()) {
    out.push_back({path, SiteKind::kClassifier, false, 0});
    return;
  }
  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    for (std::size_t s = 0; s < chain->stages.size(); ++s) {
      auto stage_path = path;
      stage_path.push_back(s);
      out.push_back({std::move(stage_path), SiteKind::kClassifier, true, 0});
      if (s < chain->thresholds.size()) out.push_back({path, SiteKind::kTrigger, false, s});
    }
    return;
  }
  out.push_back({path, SiteKind::kMerger, false, 0});
  const auto& merger = std::get<Merger>(node.value);
  for (std::size_t i = 0; i < merger.children.size(); ++i) {
    path.push_back(i);
    collect_sites(merger.children[i], path, out);
    path.pop_back();
  }
}

void collect_slots(const Node& node, std::vector<std::size_t>& path, std::vector<Slot>& out) {
  out.push_back({path, false});
  if (const auto* chain = std::get_if<Chain>(&node.value)) {
    for (std::size_t s = 0; s < chain->stages.size(); ++s) {
      auto stage_path = path;
      stage_path.push_back(s);
      out.push_back({std::move(stage_path), true});
    }
  } else if (const auto* merger = std::get_if<Merger>(&node.value)) {
    for (std::size_t i = 0; i < merger->children.size(); ++i) {
      path.push_back(i);
      collect_slots(merger->children[i], path, out);
      path.pop_back();
    }
  }
}

std::string random_model(const ModelPool& pool, Rng& rng) {
  return pool.models[rng.index(pool.models.size())].id;
}

bool better(const Individual& a, const Individual& b) {
  if (fitter(a.fitness, b.fitness)) return true;
  if (fitter(b.fitness, a.fitness)) return false;
  return a.hash < b.hash;
}

// Tries the site's operators in random order until one applies.
bool mutate_site(Node& root, const Site& site, const EarnConfig& config, const ModelPool& pool,
                 Rng& rng) {
  auto ops = site_operators(site);
  if (site.kind == SiteKind::kTrigger) {
    // One direction, chosen at random; clamping can leave it unchanged.
    return apply_mutation(root, site, ops[rng.index(ops.size())], config, pool, rng);
  }
  while (!ops.empty()) {
    const auto pick = rng.index(ops.size());
    if (apply_mutation(root, site, ops[pick], config, pool, rng)) return true;
    ops.erase(ops.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return false;
}

Individual make_individual(Node graph, const ObjectiveVector& objectives,
                           std::span<const Objective> enabled) {
  Individual ind;
  ind.hash = structural_hash(graph);
  ind.graph = std::move(graph);
  ind.objectives = objectives;
  ind.point = project(objectives, enabled);
  return ind;
}

}  // namespace

void EarnConfig::check() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (population_limit == 0) fail("population_limit must be positive");
  if (offspring_limit == 0) fail("offspring_limit must be positive");
  if (tournament_size == 0) fail("tournament_size must be positive");
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) fail("mutation_rate must be in [0, 1]");
  if (!(node_mutation_prob >= 0.0 && node_mutation_prob <= 1.0)) {
    fail("node_mutation_prob must be in [0, 1]");
  }
  if (!(threshold_step > 0.0 && threshold_step <= 1.0)) fail("threshold_step must be in (0, 1]");
  if (!(initial_threshold >= 0.0 && initial_threshold <= 1.0)) {
    fail("initial_threshold must be in [0, 1]");
  }
  if (max_depth < 1) fail("max_depth must be at least 1");
  if (!(hv_epsilon >= 0.0)) fail("hv_epsilon must be non-negative");
  if (hv_stop && hv_patience == 0) fail("hv_patience must be positive");
}

EarnConfig parse_config(std::string_view json_text, EarnConfig base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const char* const kKnown[] = {
      "population_limit", "offspring_limit", "tournament_size", "mutation_rate",
      "node_mutation_prob", "crossover_rate", "iterations", "threshold_step",
      "initial_threshold", "max_depth", "hv_stop", "hv_epsilon", "hv_patience",
      "mutate_all_protocols", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw std::invalid_argument("config: unknown field '" + key + "'");
    }
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end()) it->get_to(field);
    };
    get("population_limit", base.population_limit);
    get("offspring_limit", base.offspring_limit);
    get("tournament_size", base.tournament_size);
    get("mutation_rate", base.mutation_rate);
    get("node_mutation_prob", base.node_mutation_prob);
    get("iterations", base.iterations);
    get("threshold_step", base.threshold_step);
    get("initial_threshold", base.initial_threshold);
    get("max_depth", base.max_depth);
    get("hv_stop", base.hv_stop);
    get("hv_epsilon", base.hv_epsilon);
    get("hv_patience", base.hv_patience);
    get("mutate_all_protocols", base.mutate_all_protocols);
    get("seed", base.seed);
    if (auto it = j.find("crossover_rate"); it != j.end()) {
      if (std::abs(it->get<double>() - base.crossover_rate()) > 1e-12) {
        throw std::invalid_argument("config: crossover_rate must equal 1 - mutation_rate");
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  base.check();
  return base;
}

std::string config_to_json(const EarnConfig& c) {
  json j = {{"population_limit", c.population_limit},
            {"offspring_limit", c.offspring_limit},
            {"tournament_size", c.tournament_size},
            {"mutation_rate", c.mutation_rate},
            {"crossover_rate", c.crossover_rate()},
            {"node_mutation_prob", c.node_mutation_prob},
            {"iterations", c.iterations},
            {"threshold_step", c.threshold_step},
            {"initial_threshold", c.initial_threshold},
            {"max_depth", c.max_depth},
            {"hv_stop", c.hv_stop},
            {"hv_epsilon", c.hv_epsilon},
            {"hv_patience", c.hv_patience},
            {"mutate_all_protocols", c.mutate_all_protocols},
            {"seed", c.seed}};
  return j.dump(2);
}

const Individual& tournament_select(std::span<const Individual> population, std::size_t k, Rng& rng) {
  if (population.empty()) throw std::invalid_argument("tournament over an empty population");
  const Individual* best = &population[rng.index(population.size())];
  for (std::size_t i = 1; i < k; ++i) {
    const Individual* challenger = &population[rng.index(population.size())];
    if (better(*challenger, *best)) best = challenger;
  }
  return *best;
}

std::string_view to_string(MutationOp op) {
  switch (op) {
    case MutationOp::kAddModel: return "add_model";
    case MutationOp::kSwitchProtocol: return "switch_protocol";
    case MutationOp::kIncrementThreshold: return "increment_threshold";
    case MutationOp::kDecrementThreshold: return "decrement_threshold";
    case MutationOp::kReplaceModel: return "replace_model";
    case MutationOp::kExtendChain: return "extend_chain";
    case MutationOp::kMergeWith: return "merge_with";
  }
  return "?";
}

std::vector<Site> mutation_sites(const Node& root) {
  std::vector<Site> out;
  std::vector<std::size_t> path;
  collect_sites(root, path, out);
  return out;
}

std::vector<MutationOp> site_operators(const Site& site) {
  switch (site.kind) {
    case SiteKind::kMerger: return {MutationOp::kAddModel, MutationOp::kSwitchProtocol};
    case SiteKind::kTrigger:
      return {MutationOp::kIncrementThreshold, MutationOp::kDecrementThreshold};
    case SiteKind::kClassifier:
      if (site.in_chain) return {MutationOp::kReplaceModel, MutationOp::kExtendChain};
      return {MutationOp::kReplaceModel, MutationOp::kExtendChain, MutationOp::kMergeWith};
  }
  return {};
}

bool apply_mutation(Node& root, const Site& site, MutationOp op, const EarnConfig& config,
                    const ModelPool& pool, Rng& rng) {
  const auto allowed = site_operators(site);
  if (std::find(allowed.begin(), allowed.end(), op) == allowed.end()) return false;

  switch (op) {
    case MutationOp::kAddModel: {
      auto& merger = std::get<Merger>(node_at(root, site.path).value);
      merger.children.push_back(make_classifier(random_model(pool, rng)));
      return true;
    }
    case MutationOp::kSwitchProtocol: {
      auto& merger = std::get<Merger>(node_at(root, site.path).value);
      if (config.mutate_all_protocols) {
        std::vector<MergeProtocol> others;
        for (auto p : kAllProtocols) {
          if (p != merger.protocol) others.push_back(p);
        }
        merger.protocol = others[rng.index(others.size())];
      } else {
        merger.protocol = toggle_weighted(merger.protocol);
      }
      if (!is_weighted(merger.protocol)) merger.weights.clear();
      return true;
    }
    case MutationOp::kIncrementThreshold:
    case MutationOp::kDecrementThreshold: {
      auto& chain = std::get<Chain>(node_at(root, site.path).value);
      double& t = chain.thresholds.at(site.trigger);
      const double step = op == MutationOp::kIncrementThreshold ? config.threshold_step
                                                                 : -config.threshold_step;
      t = std::clamp(t + step, 0.0, 1.0);
      return true;
    }
    case MutationOp::kReplaceModel: {
      if (pool.models.size() < 2) return false;
      std::string* id = nullptr;
      if (site.in_chain) {
        const std::span<const std::size_t> chain_path(site.path.data(), site.path.size() - 1);
        auto& chain = std::get<Chain>(node_at(root, chain_path).value);
        id = &chain.stages.at(site.path.back()).model_id;
      } else {
        id = &std::get<Classifier>(node_at(root, site.path).value).model_id;
      }
      const auto current = pool.index_of(*id);
      std::size_t pick = rng.index(pool.models.size() - 1);
      if (current && pick >= *current) ++pick;
      *id = pool.models[pick].id;
      return true;
    }
    case MutationOp::kExtendChain: {
      const std::string added = random_model(pool, rng);
      if (site.in_chain) {
        const std::span<const std::size_t> chain_path(site.path.data(), site.path.size() - 1);
        auto& chain = std::get<Chain>(node_at(root, chain_path).value);
        const auto stage = site.path.back();
        chain.stages.insert(chain.stages.begin() + static_cast<std::ptrdiff_t>(stage + 1),
                            Classifier{added});
        chain.thresholds.insert(chain.thresholds.begin() + static_cast<std::ptrdiff_t>(stage),
                                config.initial_threshold);
        return true;
      }
      Node& node = node_at(root, site.path);
      Node previous = node;
      node = make_chain({std::get<Classifier>(previous.value).model_id, added},
                        {config.initial_threshold});
      if (depth(root) > config.max_depth) {
        node_at(root, site.path) = std::move(previous);
        return false;
      }
      return true;
    }
    case MutationOp::kMergeWith: {
      Node& node = node_at(root, site.path);
      Node previous = node;
      node = make_merger(MergeProtocol::kAverage, {previous, make_classifier(random_model(pool, rng))});
      if (depth(root) > config.max_depth) {
        node_at(root, site.path) = std::move(previous);
        return false;
      }
      return true;
    }
  }
  return false;
}

Node mutate(const Node& parent, const EarnConfig& config, const Evaluator& evaluator, Rng& rng) {
  const auto& pool = evaluator.pool();
  const auto original = structural_hash(parent);
  const auto sites = mutation_sites(parent);

  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (rng.bernoulli(config.node_mutation_prob)) chosen.push_back(i);
    }
    if (chosen.empty()) continue;
    Node child = parent;
    // Reverse pre-order keeps the paths of the remaining chosen sites valid.
    for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
      mutate_site(child, sites[*it], config, pool, rng);
    }
    evaluator.assign_weights(child);
    if (structural_hash(child) != original) return child;
  }

  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Node child = parent;
    mutate_site(child, sites[rng.index(sites.size())], config, pool, rng);
    evaluator.assign_weights(child);
    if (structural_hash(child) != original) return child;
  }
  return parent;
}

std::vector<Slot> crossover_slots(const Node& root) {
  std::vector<Slot> out;
  std::vector<std::size_t> path;
  collect_slots(root, path, out);
  return out;
}

Node subtree_at(const Node& root, const Slot& slot) {
  if (!slot.chain_stage) return node_at(root, slot.path);
  const std::span<const std::size_t> chain_path(slot.path.data(), slot.path.size() - 1);
  const auto& chain = std::get<Chain>(node_at(root, chain_path).value);
  return Node{chain.stages.at(slot.path.back())};
}

void replace_subtree(Node& root, const Slot& slot, Node subtree) {
  if (!slot.chain_stage) {
    node_at(root, slot.path) = std::move(subtree);
    return;
  }
  if (!subtree.is_classifier()) throw GraphError("chain stages accept only classifiers");
  const std::span<const std::size_t> chain_path(slot.path.data(), slot.path.size() - 1);
  auto& chain = std::get<Chain>(node_at(root, chain_path).value);
  chain.stages.at(slot.path.back()) = std::get<Classifier>(std::move(subtree.value));
}

std::pair<Node, Node> crossover(const Node& a, const Node& b, const EarnConfig& config,
                                const Evaluator& evaluator, Rng& rng) {
  // Swapping between identical parents only reshuffles the same material.
  if (structural_hash(a) == structural_hash(b)) return {a, b};
  const auto slots_a = crossover_slots(a);
  const auto slots_b = crossover_slots(b);
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const auto& sa = slots_a[rng.index(slots_a.size())];
    const auto& sb = slots_b[rng.index(slots_b.size())];
    Node ta = subtree_at(a, sa);
    Node tb = subtree_at(b, sb);
    if ((sa.chain_stage && !tb.is_classifier()) || (sb.chain_stage && !ta.is_classifier())) continue;
    Node child_a = a;
    Node child_b = b;
    replace_subtree(child_a, sa, std::move(tb));
    replace_subtree(child_b, sb, std::move(ta));
    if (depth(child_a) > config.max_depth || depth(child_b) > config.max_depth) break;
    evaluator.assign_weights(child_a);
    evaluator.assign_weights(child_b);
    return {std::move(child_a), std::move(child_b)};
  }
  return {a, b};
}

void assign_fitness(std::vector<Individual>& individuals) {
  std::vector<Point> points;
  points.reserve(individuals.size());
  for (const auto& ind : individuals) points.push_back(ind.point);
  const auto fitness = assign_fitness(points);
  for (std::size_t i = 0; i < individuals.size(); ++i) individuals[i].fitness = fitness[i];
}

std::vector<Individual> initialize(const Evaluator& evaluator) {
  const auto& pool = evaluator.pool();
  std::vector<Node> graphs;
  graphs.reserve(pool.models.size());
  for (const auto& m : pool.models) graphs.push_back(make_classifier(m.id));
  const auto objectives = evaluator.evaluate_batch(graphs, 1);
  std::vector<Individual> population;
  population.reserve(graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    population.push_back(make_individual(std::move(graphs[i]), objectives[i],
                                         evaluator.context().objectives));
  }
  assign_fitness(population);
  return population;
}

std::vector<Individual> select_survivors(std::vector<Individual> candidates, std::size_t limit) {
  assign_fitness(candidates);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return better(candidates[a], candidates[b]);
  });
  order.resize(std::min(limit, order.size()));
  std::vector<Individual> survivors;
  survivors.reserve(order.size());
  for (auto i : order) survivors.push_back(std::move(candidates[i]));
  return survivors;
}

Point reference_point(std::span<const Individual> initial) {
  Point worst = initial.front().point;
  for (const auto& ind : initial) {
    for (std::size_t k = 0; k < worst.size(); ++k) worst[k] = std::max(worst[k], ind.point[k]);
  }
  for (auto& w : worst) w = w > 0.0 ? w * 1.1 : 1.0;
  return worst;
}

RunResult run(const ModelPool& pool, const EarnConfig& config, const EvalContext& ctx,
              std::size_t jobs) {
  config.check();
  const Evaluator evaluator(pool, ctx);
  Rng rng(config.seed);

  RunResult result{initialize(evaluator), ParetoArchive(ctx.objectives), {}, {}, 0, false};
  auto& population = result.population;
  auto& archive = result.archive;
  for (const auto& ind : population) archive.insert(ind.hash, ind.graph, ind.objectives);
  result.reference = reference_point(population);
  archive.track_hypervolume(result.reference);

  auto best_error = [](const ParetoArchive& a) {
    double best = 1.0;
    for (const auto& e : a.entries()) best = std::min(best, e.objectives.error);
    return best;
  };
  result.history.push_back({0, best_error(archive), archive.tracked_hypervolume(), archive.size(),
                            population.size(), 0, 0, 0, 0, 0, 0.0});

  std::size_t stagnant = 0;
  for (std::size_t gen = 1; gen <= config.iterations; ++gen) {
    std::unordered_set<std::uint64_t> seen;
    for (const auto& ind : population) seen.insert(ind.hash.digest);
    std::vector<Node> offspring;
    offspring.reserve(config.offspring_limit);
    std::size_t mutations = 0;
    std::size_t crossovers = 0;

    while (offspring.size() < config.offspring_limit) {
      if (rng.bernoulli(config.mutation_rate)) {
        Node child;
        for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
          const auto& parent = tournament_select(population, config.tournament_size, rng);
          child = mutate(parent.graph, config, evaluator, rng);
          if (!seen.count(structural_hash(child).digest)) break;
        }
        seen.insert(structural_hash(child).digest);
        offspring.push_back(std::move(child));
        ++mutations;
      } else {
        std::vector<Node> accepted;
        for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
          const auto& a = tournament_select(population, config.tournament_size, rng);
          const auto& b = tournament_select(population, config.tournament_size, rng);
          auto [c1, c2] = crossover(a.graph, b.graph, config, evaluator, rng);
          accepted.clear();
          std::unordered_set<std::uint64_t> fresh;
          for (Node* c : {&c1, &c2}) {
            const auto h = structural_hash(*c).digest;
            if (!seen.count(h) && fresh.insert(h).second) accepted.push_back(*c);
          }
          if (!accepted.empty()) break;
          if (attempt + 1 == kMaxAttempts) accepted = {std::move(c1), std::move(c2)};
        }
        for (auto& c : accepted) {
          if (offspring.size() == config.offspring_limit) break;
          seen.insert(structural_hash(c).digest);
          offspring.push_back(std::move(c));
        }
        ++crossovers;
      }
    }

    CacheStats stats;
    const auto objectives = evaluator.evaluate_batch(offspring, jobs, &stats);
    result.offspring_evaluations += offspring.size();

    // Offspring that repeat a member are evaluated and archived but not kept twice.
    std::unordered_set<std::uint64_t> members;
    for (const auto& ind : population) members.insert(ind.hash.digest);
    std::vector<Individual> combined = std::move(population);
    combined.reserve(combined.size() + offspring.size());
    for (std::size_t i = 0; i < offspring.size(); ++i) {
      auto child = make_individual(std::move(offspring[i]), objectives[i], ctx.objectives);
      archive.insert(child.hash, child.graph, child.objectives);
      if (members.insert(child.hash.digest).second) combined.push_back(std::move(child));
    }
    population = select_survivors(std::move(combined), config.population_limit);

    const double previous = result.history.back().hypervolume;
    const double hv = archive.tracked_hypervolume();
    result.history.push_back({gen, best_error(archive), hv, archive.size(), population.size(),
                              objectives.size(), mutations, crossovers,
                              result.offspring_evaluations, stats.hits,
                              objectives.empty() ? 0.0
                                                 : static_cast<double>(stats.hits) /
                                                       static_cast<double>(objectives.size())});

    if (config.hv_stop) {
      const double gain = previous > 0.0 ? (hv - previous) / previous : (hv > 0.0 ? 1.0 : 0.0);
      stagnant = gain < config.hv_epsilon ? stagnant + 1 : 0;
      if (stagnant >= config.hv_patience) {
        result.stopped_on_hypervolume = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace earn
