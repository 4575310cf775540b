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

#ifndef EARN_POOL_HPP_
#define EARN_POOL_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace earn {

// Rows of a prediction matrix are softmax outputs; this is the allowed
// deviation of a row sum from 1.
inline constexpr double kRowSumTolerance = 1e-4;

// Raised for any malformed, inconsistent or unreadable pool data.
class PoolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cached softmax outputs of one model over one split, with the labels.
// Samples exist only as row indices.
struct PredictionSet {
  std::size_t n_samples = 0;
  std::size_t n_classes = 0;
  std::vector<float> probs;  // row-major n_samples x n_classes
  std::vector<std::uint32_t> labels;

  std::span<const float> row(std::size_t i) const {
    return {probs.data() + i * n_classes, n_classes};
  }

  bool operator==(const PredictionSet&) const = default;
};

struct ModelRecord {
  std::string id;
  std::uint64_t param_count = 0;
  std::map<std::string, double> latencies;  // seconds per 128-sample batch
  PredictionSet validation;
  PredictionSet test;

  bool operator==(const ModelRecord&) const = default;
};

struct ModelPool {
  std::string dataset;
  std::size_t n_classes = 0;
  std::vector<std::string> platforms;
  std::vector<ModelRecord> models;

  std::optional<std::size_t> index_of(const std::string& model_id) const;
  bool has_platform(const std::string& platform) const;

  bool operator==(const ModelPool&) const = default;
};

// Throws PoolError naming `context` on the first invariant violation.
void check_prediction_set(const PredictionSet& set, const std::string& context);
void check_pool(const ModelPool& pool);

// Fraction of rows whose argmax (lowest index on ties) matches the label.
double accuracy(const PredictionSet& set);

// Binary prediction ("EPRD") and label ("ELBL") files, little-endian.
void write_predictions(const std::filesystem::path& path, const PredictionSet& set);
void write_labels(const std::filesystem::path& path, std::span<const std::uint32_t> labels);
// Reads only the probability block; labels stay empty.
PredictionSet read_predictions(const std::filesystem::path& path);
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);

// Loads pool.json and every file it references, then checks all invariants.
ModelPool load_pool(const std::filesystem::path& manifest_path);
// Writes pool.json plus one EPRD/ELBL pair per model and split into `dir`.
// Returns the manifest path.
std::filesystem::path write_pool(const ModelPool& pool, const std::filesystem::path& dir);

// Deterministic synthetic pool: each split holds n_samples rows. Models
// span a range of accuracies, sizes and latencies on platforms "cpu" and
// "gpu".
ModelPool synth_pool(std::size_t n_models, std::size_t n_samples, std::size_t n_classes,
                     std::uint64_t seed);

// Per class with m_c samples, the first half receives ceil(m_c/2) and the
// second floor(m_c/2), chosen by a seeded shuffle. Each half keeps the
// input's row order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_half_split_indices(
    std::span<const std::uint32_t> labels, std::size_t n_classes, std::uint64_t seed);
std::pair<PredictionSet, PredictionSet> stratified_half_split(const PredictionSet& set,
                                                              std::uint64_t seed);
PredictionSet select_rows(const PredictionSet& set, std::span<const std::size_t> rows);

// Text import: one comma-separated probability row per line; one label per line.
PredictionSet import_csv(const std::filesystem::path& probs_csv,
                         const std::filesystem::path& labels_csv);

}  // namespace earn

#endif  // EARN_POOL_HPP_
