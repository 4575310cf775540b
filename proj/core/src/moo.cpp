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

#include "earn/moo.hpp"

#include <algorithm>
#include <iterator>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

namespace earn {

namespace {

using Real = long double;

void check_arity(std::size_t a, std::size_t b) {
  if (a != b) {
    throw std::invalid_argument("objective arity mismatch: " + std::to_string(a) + " vs " +
                                std::to_string(b));
  }
}

// Dominated area of a 2D staircase, maintained under point insertion.
class Staircase {
 public:
  Staircase(Real ref_y, Real ref_z) : ref_y_(ref_y), ref_z_(ref_z) {}

  void insert(Real y, Real z) {
    auto it = steps_.lower_bound(y);
    if (it != steps_.begin() && std::prev(it)->second <= z) return;
    if (it != steps_.end() && it->first == y && it->second <= z) return;

    const bool has_prev = it != steps_.begin();
    const auto prev = has_prev ? std::prev(it) : steps_.end();
    const Real old_next = it == steps_.end() ? ref_y_ : it->first;
    Real before = has_prev ? (old_next - prev->first) * (ref_z_ - prev->second) : 0;

    auto last = it;
    while (last != steps_.end() && last->second >= z) {
      const auto after = std::next(last);
      const Real next_y = after == steps_.end() ? ref_y_ : after->first;
      before += (next_y - last->first) * (ref_z_ - last->second);
      last = after;
    }
    const Real next_y = last == steps_.end() ? ref_y_ : last->first;
    Real after_area = (next_y - y) * (ref_z_ - z);
    if (has_prev) after_area += (y - prev->first) * (ref_z_ - prev->second);

    steps_.erase(it, last);
    steps_.emplace(y, z);
    area_ += after_area - before;
  }

  Real area() const { return area_; }

 private:
  Real ref_y_;
  Real ref_z_;
  Real area_ = 0;
  std::map<Real, Real> steps_;
};

Real volume(const std::vector<Point>& points, std::span<const double> ref) {
  if (points.empty()) return 0;
  const std::size_t d = ref.size();
  if (d == 1) {
    Real best = points.front()[0];
    for (const auto& p : points) best = std::min<Real>(best, p[0]);
    return ref[0] - best;
  }
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  Real total = 0;
  if (d == 2) {
    Real best_y = ref[1];
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& p = points[order[k]];
      best_y = std::min<Real>(best_y, p[1]);
      const Real next_x = k + 1 < order.size() ? points[order[k + 1]][0] : ref[0];
      total += (next_x - p[0]) * (ref[1] - best_y);
    }
    return total;
  }
  // Sweep the first objective; each slice is the 2D area of the points seen so far.
  Staircase slice(ref[1], ref[2]);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = points[order[k]];
    slice.insert(p[1], p[2]);
    const Real next_x = k + 1 < order.size() ? points[order[k + 1]][0] : ref[0];
    total += (next_x - p[0]) * slice.area();
  }
  return total;
}

bool inside(const Point& p, std::span<const double> ref) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] <= ref[i])) return false;
  }
  return true;
}

}  // namespace

bool dominates(std::span<const double> a, std::span<const double> b) {
  check_arity(a.size(), b.size());
  bool strictly = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    if (a[i] < b[i]) strictly = true;
  }
  return strictly;
}

std::vector<Front> fast_nondominated_sort(const std::vector<Point>& points) {
  const std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> dominators(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dominates(points[i], points[j])) {
        dominated[i].push_back(j);
        ++dominators[j];
      } else if (dominates(points[j], points[i])) {
        dominated[j].push_back(i);
        ++dominators[i];
      }
    }
  }
  std::vector<Front> fronts;
  Front current;
  for (std::size_t i = 0; i < n; ++i) {
    if (dominators[i] == 0) current.push_back(i);
  }
  while (!current.empty()) {
    Front next;
    for (auto i : current) {
      for (auto j : dominated[i]) {
        if (--dominators[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_distance(const std::vector<Point>& front) {
  const std::size_t n = front.size();
  std::vector<double> distance(n, 0.0);
  if (n <= 2) {
    std::fill(distance.begin(), distance.end(), kInfinity);
    return distance;
  }
  const std::size_t d = front.front().size();
  std::vector<double> values(n);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) values[i] = front[i][k];
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (hi == lo) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = values[i];
      if (v == lo || v == hi) {
        distance[i] = kInfinity;
        continue;
      }
      const auto at = std::lower_bound(sorted.begin(), sorted.end(), v);
      distance[i] += (*std::next(at) - *std::prev(at)) / (hi - lo);
    }
  }
  return distance;
}

double hypervolume(const std::vector<Point>& points, std::span<const double> reference) {
  if (reference.empty() || reference.size() > 3) {
    throw std::invalid_argument("hypervolume supports 1 to 3 objectives");
  }
  for (const auto& p : points) {
    check_arity(p.size(), reference.size());
    if (!inside(p, reference)) throw std::invalid_argument("point does not dominate the reference");
  }
  return static_cast<double>(volume(points, reference));
}

double clipped_hypervolume(const std::vector<Point>& points, std::span<const double> reference) {
  std::vector<Point> kept;
  for (const auto& p : points) {
    if (inside(p, reference)) kept.push_back(p);
  }
  return hypervolume(kept, reference);
}

namespace {

Real exclusive_volume(const Point& candidate, const std::vector<Point>& others,
                      std::span<const double> reference) {
  if (!inside(candidate, reference)) return 0;
  Real box = 1;
  for (std::size_t i = 0; i < candidate.size(); ++i) box *= Real(reference[i]) - candidate[i];
  std::vector<Point> overlaps;
  overlaps.reserve(others.size());
  for (const auto& p : others) {
    if (!inside(p, reference)) continue;
    Point q(candidate.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = std::max(candidate[i], p[i]);
    overlaps.push_back(std::move(q));
  }
  return std::max<Real>(0, box - volume(overlaps, reference));
}

}  // namespace

double exclusive_hypervolume(const Point& candidate, const std::vector<Point>& others,
                             std::span<const double> reference) {
  check_arity(candidate.size(), reference.size());
  return static_cast<double>(exclusive_volume(candidate, others, reference));
}

bool fitter(const Fitness& a, const Fitness& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

std::vector<Fitness> assign_fitness(const std::vector<Point>& points) {
  std::vector<Fitness> fitness(points.size());
  const auto fronts = fast_nondominated_sort(points);
  for (std::size_t r = 0; r < fronts.size(); ++r) {
    std::vector<Point> members;
    members.reserve(fronts[r].size());
    for (auto i : fronts[r]) members.push_back(points[i]);
    const auto crowding = crowding_distance(members);
    for (std::size_t j = 0; j < fronts[r].size(); ++j) fitness[fronts[r][j]] = {r, crowding[j]};
  }
  return fitness;
}

ParetoArchive::ParetoArchive(std::vector<Objective> objectives) : objectives_(std::move(objectives)) {}

bool ParetoArchive::insert(StructuralHash hash, const Node& graph, const ObjectiveVector& objectives) {
  Point point = project(objectives, objectives_);
  for (const auto& e : entries_) {
    if (e.hash == hash || dominates(e.point, point)) return false;
  }
  if (!reference_.empty()) tracked_ += exclusive_volume(point, points(), reference_);
  std::erase_if(entries_, [&](const ArchiveEntry& e) { return dominates(point, e.point); });
  entries_.push_back({hash, graph, objectives, std::move(point)});
  return true;
}

std::vector<Point> ParetoArchive::points() const {
  std::vector<Point> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.point);
  return out;
}

double ParetoArchive::hypervolume(std::span<const double> reference) const {
  return clipped_hypervolume(points(), reference);
}

void ParetoArchive::track_hypervolume(Point reference) {
  check_arity(reference.size(), objectives_.size());
  std::vector<Point> kept;
  for (const auto& p : points()) {
    if (inside(p, reference)) kept.push_back(p);
  }
  tracked_ = volume(kept, reference);
  reference_ = std::move(reference);
}

std::vector<const ArchiveEntry*> ParetoArchive::sorted() const {
  std::vector<const ArchiveEntry*> out;
  for (const auto& e : entries_) out.push_back(&e);
  std::sort(out.begin(), out.end(), [](const ArchiveEntry* a, const ArchiveEntry* b) {
    if (a->point != b->point) return a->point < b->point;
    return a->hash < b->hash;
  });
  return out;
}

}  // namespace earn
