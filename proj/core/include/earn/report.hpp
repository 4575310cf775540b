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

#ifndef EARN_REPORT_HPP_
#define EARN_REPORT_HPP_

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "earn/evaluator.hpp"
#include "earn/moo.hpp"
#include "earn/pool.hpp"
#include "earn/search.hpp"

namespace earn {

// Run artifacts. Entries are written in ParetoArchive::sorted() order and
// every real uses round-trip formatting, so equal runs give equal bytes.
void write_archive_csv(std::ostream& out, const ParetoArchive& archive);
void write_archive_json(std::ostream& out, const ParetoArchive& archive);
void write_history_csv(std::ostream& out, std::span<const GenerationRecord> history);
void write_population_json(std::ostream& out, std::span<const Individual> population,
                           std::span<const Objective> objectives);

// One ensemble read back from an archive or enumeration CSV.
struct ResultRow {
  std::string source;
  std::string label;  // graph JSON or member list
  ObjectiveVector objectives;
  bool negative_weights = false;
};

// Needs error, latency_s and size_params columns; graph_json or members
// become the label.
std::vector<ResultRow> read_result_csv(const std::filesystem::path& path);

struct ReferenceModel {
  std::string id;
  ObjectiveVector objectives;
};

// The most accurate single model on the split (first in pool order on ties).
ReferenceModel reference_model(const ModelPool& pool, Split split, const std::string& platform);

struct Pick {
  ResultRow row;
  double accuracy_gain = 0.0;   // accuracy(row) - accuracy(reference)
  double speedup = 0.0;         // reference latency / row latency
  double size_reduction = 0.0;  // reference size / row size
};

struct Summary {
  ReferenceModel reference;
  std::optional<Pick> most_accurate;      // ensemble A
  std::optional<Pick> fastest_matching;   // ensemble B
  std::optional<Pick> smallest_matching;  // ensemble C
  std::size_t rows = 0;
  std::size_t negative_weight_rows = 0;
};

// A: lowest error. B: lowest latency with accuracy >= reference. C: lowest
// size with accuracy >= reference. Ties go to the earlier row.
Summary summarize(std::span<const ResultRow> rows, const ReferenceModel& reference);
void write_summary(std::ostream& out, const Summary& summary);

// Non-dominated rows on the (x, y) objective pair, sorted by x then y.
std::vector<ResultRow> front_2d(std::span<const ResultRow> rows, Objective x, Objective y);
void write_front_csv(std::ostream& out, std::span<const ResultRow> front, Objective x, Objective y);

}  // namespace earn

#endif  // EARN_REPORT_HPP_
