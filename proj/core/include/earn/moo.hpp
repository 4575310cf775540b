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

#ifndef EARN_MOO_HPP_
#define EARN_MOO_HPP_

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "earn/evaluator.hpp"
#include "earn/graph.hpp"

namespace earn {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Minimization: a <= b componentwise and a != b. Throws
// std::invalid_argument on arity mismatch.
bool dominates(std::span<const double> a, std::span<const double> b);

using Front = std::vector<std::size_t>;

// Fronts of indices; front 0 is the Pareto-optimal set. Indices inside a
// front are ascending.
std::vector<Front> fast_nondominated_sort(const std::vector<Point>& points);

// Per-front min/max normalization. Points at an objective's extreme value
// get +inf; interior points add (next - prev) / (max - min) using the
// nearest strictly smaller and larger values. Objectives with max == min
// are skipped. Fronts of at most two points are all +inf.
std::vector<double> crowding_distance(const std::vector<Point>& front);

// Exact dominated volume of the union of boxes [p, reference] for arity
// 1 to 3. Throws std::invalid_argument if a point does not weakly dominate
// the reference.
double hypervolume(const std::vector<Point>& points, std::span<const double> reference);

struct Fitness {
  std::size_t rank = 0;
  double crowding = kInfinity;
};

// Lower rank wins; equal ranks go to the larger crowding distance.
bool fitter(const Fitness& a, const Fitness& b);

std::vector<Fitness> assign_fitness(const std::vector<Point>& points);

struct ArchiveEntry {
  StructuralHash hash;
  Node graph;
  ObjectiveVector objectives;
  Point point;
};

// Mutually non-dominated set accumulated across a run. Dominance is taken
// over the enabled objectives only.
class ParetoArchive {
 public:
  explicit ParetoArchive(std::vector<Objective> objectives);

  // Inserted iff not dominated by and not hash-equal to any entry; entries
  // the candidate dominates are evicted.
  bool insert(StructuralHash hash, const Node& graph, const ObjectiveVector& objectives);

  const std::vector<ArchiveEntry>& entries() const { return entries_; }
  const std::vector<Objective>& objectives() const { return objectives_; }
  std::size_t size() const { return entries_.size(); }

  std::vector<Point> points() const;
  // Points outside the reference box contribute nothing and are skipped.
  double hypervolume(std::span<const double> reference) const;

  // Freezes a reference point and starts tracking the archive hypervolume
  // incrementally: each accepted candidate adds its exclusive contribution,
  // so the tracked value never decreases.
  void track_hypervolume(Point reference);
  double tracked_hypervolume() const { return static_cast<double>(tracked_); }
  const Point& reference() const { return reference_; }
  // Entries ordered by projected objectives, then hash.
  std::vector<const ArchiveEntry*> sorted() const;

 private:
  std::vector<Objective> objectives_;
  std::vector<ArchiveEntry> entries_;
  Point reference_;
  long double tracked_ = 0;
};

// Hypervolume over the points that weakly dominate `reference`.
double clipped_hypervolume(const std::vector<Point>& points, std::span<const double> reference);

// Volume dominated by `candidate` and by none of `others`, clamped at zero.
double exclusive_hypervolume(const Point& candidate, const std::vector<Point>& others,
                             std::span<const double> reference);

}  // namespace earn

#endif  // EARN_MOO_HPP_
