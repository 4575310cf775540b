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

#include "earn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "earn/csv.hpp"

namespace earn {

namespace {

using json = nlohmann::json;

const char* column_name(Objective o) {
  switch (o) {
    case Objective::kError: return "error";
    case Objective::kLatency: return "latency_s";
    case Objective::kSize: return "size_params";
  }
  return "?";
}

double value_of(const ObjectiveVector& v, Objective o) {
  switch (o) {
    case Objective::kError: return v.error;
    case Objective::kLatency: return v.latency;
    case Objective::kSize: return v.size;
  }
  return 0.0;
}

json metrics_json(const ObjectiveVector& v) {
  return {{"error", v.error}, {"latency_s", v.latency}, {"size_params", v.size}};
}

json names_json(std::span<const Objective> objectives) {
  json names = json::array();
  for (auto o : objectives) names.push_back(column_name(o));
  return names;
}

Pick make_pick(const ResultRow& row, const ReferenceModel& ref) {
  return {row, ref.objectives.error - row.objectives.error,
          ref.objectives.latency / row.objectives.latency, ref.objectives.size / row.objectives.size};
}

}  // namespace

void write_archive_csv(std::ostream& out, const ParetoArchive& archive) {
  out << "error,latency_s,size_params,graph_json\n";
  for (const auto* e : archive.sorted()) {
    out << format_real(e->objectives.error) << ',' << format_real(e->objectives.latency) << ','
        << format_real(e->objectives.size) << ',' << csv_escape(serialize(e->graph)) << '\n';
  }
}

void write_archive_json(std::ostream& out, const ParetoArchive& archive) {
  json entries = json::array();
  for (const auto* e : archive.sorted()) {
    entries.push_back({{"hash", e->hash.hex()},
                       {"graph", json::parse(serialize(e->graph))},
                       {"objective_names", names_json(archive.objectives())},
                       {"objectives", e->point},
                       {"metrics", metrics_json(e->objectives)},
                       {"negative_weights", has_negative_weights(e->graph)}});
  }
  out << entries.dump(2) << '\n';
}

void write_history_csv(std::ostream& out, std::span<const GenerationRecord> history) {
  out << "generation,best_error,hypervolume,archive_size,population_size,offspring,mutations,"
         "crossovers,evaluations,cache_hits,cache_hit_rate\n";
  for (const auto& h : history) {
    out << h.generation << ',' << format_real(h.best_error) << ',' << format_real(h.hypervolume)
        << ',' << h.archive_size << ',' << h.population_size << ',' << h.offspring << ','
        << h.mutations << ',' << h.crossovers << ',' << h.evaluations << ',' << h.cache_hits
        << ',' << format_real(h.cache_hit_rate) << '\n';
  }
}

void write_population_json(std::ostream& out, std::span<const Individual> population,
                           std::span<const Objective> objectives) {
  json members = json::array();
  for (const auto& ind : population) {
    members.push_back({{"hash", ind.hash.hex()},
                       {"graph", json::parse(serialize(ind.graph))},
                       {"objective_names", names_json(objectives)},
                       {"objectives", ind.point},
                       {"metrics", metrics_json(ind.objectives)},
                       {"rank", ind.fitness.rank},
                       {"crowding", std::isinf(ind.fitness.crowding) ? json("inf")
                                                                     : json(ind.fitness.crowding)}});
  }
  out << members.dump(2) << '\n';
}

std::vector<ResultRow> read_result_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PoolError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw PoolError(path.string() + ": empty file");
  const auto header = csv_split(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* required : {"error", "latency_s", "size_params"}) {
    if (!column.count(required)) {
      throw PoolError(path.string() + ": missing column '" + required + "'");
    }
  }
  const auto label_column = column.count("graph_json") ? column.at("graph_json")
                            : column.count("members")  ? column.at("members")
                                                       : header.size();
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    try {
      cells = csv_split(line);
    } catch (const std::invalid_argument& e) {
      throw PoolError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    if (cells.size() != header.size()) {
      throw PoolError(path.string() + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    ResultRow row;
    row.source = path.filename().string();
    try {
      row.objectives = {std::stod(cells[column.at("error")]), std::stod(cells[column.at("latency_s")]),
                        std::stod(cells[column.at("size_params")])};
    } catch (const std::exception&) {
      throw PoolError(path.string() + ": line " + std::to_string(line_no) + ": bad number");
    }
    if (label_column < cells.size()) row.label = cells[label_column];
    if (!column.count("graph_json")) {
      for (const char* extra : {"protocol", "tau"}) {
        if (column.count(extra) && !cells[column.at(extra)].empty()) {
          row.label += std::string(" ") + extra + "=" + cells[column.at(extra)];
        }
      }
      if (column.count("strategy")) row.label = cells[column.at("strategy")] + " " + row.label;
    }
    if (column.count("graph_json")) {
      try {
        row.negative_weights = has_negative_weights(parse_graph(row.label));
      } catch (const GraphError& e) {
        throw PoolError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ReferenceModel reference_model(const ModelPool& pool, Split split, const std::string& platform) {
  const Evaluator evaluator(pool, {split, platform, {Objective::kError, Objective::kLatency, Objective::kSize}});
  std::optional<ReferenceModel> best;
  for (const auto& m : pool.models) {
    const auto v = evaluator.evaluate(make_classifier(m.id));
    if (!best || v.error < best->objectives.error) best = ReferenceModel{m.id, v};
  }
  return *best;
}

Summary summarize(std::span<const ResultRow> rows, const ReferenceModel& reference) {
  Summary s;
  s.reference = reference;
  s.rows = rows.size();
  const ResultRow* a = nullptr;
  const ResultRow* b = nullptr;
  const ResultRow* c = nullptr;
  for (const auto& row : rows) {
    if (row.negative_weights) ++s.negative_weight_rows;
    if (!a || row.objectives.error < a->objectives.error) a = &row;
    if (row.objectives.error <= reference.objectives.error) {
      if (!b || row.objectives.latency < b->objectives.latency) b = &row;
      if (!c || row.objectives.size < c->objectives.size) c = &row;
    }
  }
  if (a) s.most_accurate = make_pick(*a, reference);
  if (b) s.fastest_matching = make_pick(*b, reference);
  if (c) s.smallest_matching = make_pick(*c, reference);
  return s;
}

void write_summary(std::ostream& out, const Summary& s) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "reference %s: accuracy %.4f, latency %.6g s, size %.0f params\n",
                s.reference.id.c_str(), 1.0 - s.reference.objectives.error,
                s.reference.objectives.latency, s.reference.objectives.size);
  out << buf;
  auto line = [&](const char* name, const std::optional<Pick>& pick) {
    if (!pick) {
      out << name << ": none matches the reference accuracy\n";
      return;
    }
    std::snprintf(buf, sizeof(buf),
                  "%s: accuracy %.4f (gain %+.4f), speedup %.2fx, size reduction %.2fx\n", name,
                  1.0 - pick->row.objectives.error, pick->accuracy_gain, pick->speedup,
                  pick->size_reduction);
    out << buf << "  " << pick->row.label << '\n';
  };
  line("ensemble A (most accurate)", s.most_accurate);
  line("ensemble B (fastest at reference accuracy)", s.fastest_matching);
  line("ensemble C (smallest at reference accuracy)", s.smallest_matching);
  out << "entries: " << s.rows << "\n";
  out << "entries with negative boosting weights: " << s.negative_weight_rows << "\n";
}

std::vector<ResultRow> front_2d(std::span<const ResultRow> rows, Objective x, Objective y) {
  std::vector<Point> points;
  points.reserve(rows.size());
  for (const auto& r : rows) points.push_back({value_of(r.objectives, x), value_of(r.objectives, y)});
  std::vector<ResultRow> front;
  if (rows.empty()) return front;
  const auto fronts = fast_nondominated_sort(points);
  for (auto i : fronts.front()) front.push_back(rows[i]);
  std::stable_sort(front.begin(), front.end(), [&](const ResultRow& a, const ResultRow& b) {
    const double ax = value_of(a.objectives, x);
    const double bx = value_of(b.objectives, x);
    if (ax != bx) return ax < bx;
    return value_of(a.objectives, y) < value_of(b.objectives, y);
  });
  return front;
}

void write_front_csv(std::ostream& out, std::span<const ResultRow> front, Objective x, Objective y) {
  out << column_name(x) << ',' << column_name(y) << ",source,label\n";
  for (const auto& r : front) {
    out << format_real(value_of(r.objectives, x)) << ',' << format_real(value_of(r.objectives, y))
        << ',' << csv_escape(r.source) << ',' << csv_escape(r.label) << '\n';
  }
}

}  // namespace earn
