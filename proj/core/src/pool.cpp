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

#include "earn/pool.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "earn/rng.hpp"

namespace earn {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::array<char, 4> kPredMagic = {'E', 'P', 'R', 'D'};
constexpr std::array<char, 4> kLabelMagic = {'E', 'L', 'B', 'L'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  Reader(std::string bytes, fs::path path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  void magic(const std::array<char, 4>& expected) {
    need(4);
    if (!std::equal(expected.begin(), expected.end(), bytes_.begin() + pos_)) {
      fail("bad magic, expected '" + std::string(expected.begin(), expected.end()) + "'");
    }
    pos_ += 4;
    if (auto version = get<std::uint32_t>(); version != kFormatVersion) {
      fail("unsupported version " + std::to_string(version));
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw PoolError(path_.string() + ": " + what);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) fail("truncated file");
  }

  std::string bytes_;
  fs::path path_;
  std::size_t pos_ = 0;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PoolError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PoolError(path.string() + ": cannot write file");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw PoolError(path.string() + ": write failed");
}

std::size_t argmax(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::optional<std::size_t> ModelPool::index_of(const std::string& model_id) const {
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].id == model_id) return i;
  }
  return std::nullopt;
}

bool ModelPool::has_platform(const std::string& platform) const {
  return std::find(platforms.begin(), platforms.end(), platform) != platforms.end();
}

void check_prediction_set(const PredictionSet& set, const std::string& context) {
  if (set.n_classes < 2) throw PoolError(context + ": need at least 2 classes");
  if (set.probs.size() != set.n_samples * set.n_classes) {
    throw PoolError(context + ": probability matrix has wrong size");
  }
  if (set.labels.size() != set.n_samples) {
    throw PoolError(context + ": label count " + std::to_string(set.labels.size()) +
                    " does not match " + std::to_string(set.n_samples) + " samples");
  }
  for (std::size_t i = 0; i < set.n_samples; ++i) {
    double sum = 0.0;
    for (float p : set.row(i)) {
      if (!(p >= 0.0F && p <= 1.0F)) {
        throw PoolError(context + ": row " + std::to_string(i) + " has probability " +
                        format_double(p) + " outside [0, 1]");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw PoolError(context + ": row " + std::to_string(i) + " row sum " + format_double(sum) +
                      " exceeds tolerance");
    }
    if (set.labels[i] >= set.n_classes) {
      throw PoolError(context + ": label " + std::to_string(set.labels[i]) + " at row " +
                      std::to_string(i) + " out of range");
    }
  }
}

void check_pool(const ModelPool& pool) {
  if (pool.models.empty()) throw PoolError("pool has no models");
  std::set<std::string> ids;
  const auto& first = pool.models.front();
  for (const auto& m : pool.models) {
    if (!ids.insert(m.id).second) throw PoolError("duplicate model id '" + m.id + "'");
    if (m.param_count == 0) throw PoolError("model '" + m.id + "': params must be positive");
    for (const auto& platform : pool.platforms) {
      auto it = m.latencies.find(platform);
      if (it == m.latencies.end()) {
        throw PoolError("model '" + m.id + "': missing latency for platform '" + platform + "'");
      }
    }
    for (const auto& [platform, seconds] : m.latencies) {
      if (!(seconds > 0.0) || !std::isfinite(seconds)) {
        throw PoolError("model '" + m.id + "': latency on '" + platform + "' must be positive");
      }
    }
    if (m.validation.n_classes != pool.n_classes || m.test.n_classes != pool.n_classes) {
      throw PoolError("model '" + m.id + "': class count differs from pool n_classes " +
                      std::to_string(pool.n_classes));
    }
    if (m.validation.n_samples != first.validation.n_samples ||
        m.test.n_samples != first.test.n_samples) {
      throw PoolError("model '" + m.id + "': sample count differs from model '" + first.id + "'");
    }
    if (m.validation.labels != first.validation.labels || m.test.labels != first.test.labels) {
      throw PoolError("model '" + m.id + "': labels differ from model '" + first.id + "'");
    }
    check_prediction_set(m.validation, "model '" + m.id + "' validation");
    check_prediction_set(m.test, "model '" + m.id + "' test");
  }
}

double accuracy(const PredictionSet& set) {
  if (set.n_samples == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.n_samples; ++i) {
    if (argmax(set.row(i)) == set.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.n_samples);
}

void write_predictions(const fs::path& path, const PredictionSet& set) {
  std::string out(kPredMagic.begin(), kPredMagic.end());
  out.reserve(20 + set.probs.size() * 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, set.n_samples);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.n_classes));
  for (float p : set.probs) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(p));
  dump(path, out);
}

void write_labels(const fs::path& path, std::span<const std::uint32_t> labels) {
  std::string out(kLabelMagic.begin(), kLabelMagic.end());
  out.reserve(16 + labels.size() * 4);
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint64_t>(out, labels.size());
  for (auto l : labels) put_le<std::uint32_t>(out, l);
  dump(path, out);
}

PredictionSet read_predictions(const fs::path& path) {
  Reader in(slurp(path), path);
  in.magic(kPredMagic);
  PredictionSet set;
  set.n_samples = in.get<std::uint64_t>();
  set.n_classes = in.get<std::uint32_t>();
  if (set.n_classes != 0 && in.remaining() / 4 / set.n_classes < set.n_samples) {
    in.fail("truncated file");
  }
  if (in.remaining() != set.n_samples * set.n_classes * 4) in.fail("trailing bytes after matrix");
  set.probs.resize(set.n_samples * set.n_classes);
  for (auto& p : set.probs) p = std::bit_cast<float>(in.get<std::uint32_t>());
  return set;
}

std::vector<std::uint32_t> read_labels(const fs::path& path) {
  Reader in(slurp(path), path);
  in.magic(kLabelMagic);
  auto n = in.get<std::uint64_t>();
  if (in.remaining() / 4 != n || in.remaining() % 4 != 0) in.fail("label count does not match file size");
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = in.get<std::uint32_t>();
  return labels;
}

ModelPool load_pool(const fs::path& manifest_path) {
  json manifest;
  {
    std::ifstream in(manifest_path);
    if (!in) throw PoolError(manifest_path.string() + ": cannot open manifest");
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      throw PoolError(manifest_path.string() + ": " + e.what());
    }
  }
  const fs::path base = manifest_path.parent_path();
  ModelPool pool;
  try {
    pool.dataset = manifest.at("dataset").get<std::string>();
    pool.n_classes = manifest.at("n_classes").get<std::size_t>();
    pool.platforms = manifest.at("platforms").get<std::vector<std::string>>();
    for (const auto& jm : manifest.at("models")) {
      ModelRecord m;
      m.id = jm.at("id").get<std::string>();
      auto params = jm.at("params").get<std::int64_t>();
      if (params <= 0) throw PoolError("model '" + m.id + "': params must be positive");
      m.param_count = static_cast<std::uint64_t>(params);
      m.latencies = jm.at("latency").get<std::map<std::string, double>>();
      auto load_split = [&](const char* name) {
        const auto& js = jm.at(name);
        const fs::path probs_path = base / js.at("probs_file").get<std::string>();
        const fs::path labels_path = base / js.at("labels_file").get<std::string>();
        PredictionSet set = read_predictions(probs_path);
        if (set.n_classes != pool.n_classes) {
          throw PoolError(probs_path.string() + ": header declares " +
                          std::to_string(set.n_classes) + " classes but manifest declares " +
                          std::to_string(pool.n_classes));
        }
        set.labels = read_labels(labels_path);
        if (set.labels.size() != set.n_samples) {
          throw PoolError(labels_path.string() + ": " + std::to_string(set.labels.size()) +
                          " labels but " + probs_path.string() + " has " +
                          std::to_string(set.n_samples) + " rows");
        }
        return set;
      };
      m.validation = load_split("validation");
      m.test = load_split("test");
      pool.models.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw PoolError(manifest_path.string() + ": " + e.what());
  }
  check_pool(pool);
  return pool;
}

fs::path write_pool(const ModelPool& pool, const fs::path& dir) {
  fs::create_directories(dir);
  json models = json::array();
  for (std::size_t i = 0; i < pool.models.size(); ++i) {
    const auto& m = pool.models[i];
    const std::string stem = "m" + std::to_string(i);
    auto emit = [&](const PredictionSet& set, const std::string& split) {
      const std::string probs = stem + "_" + split + ".eprd";
      const std::string labels = stem + "_" + split + ".elbl";
      write_predictions(dir / probs, set);
      write_labels(dir / labels, set.labels);
      return json{{"probs_file", probs}, {"labels_file", labels}};
    };
    models.push_back({{"id", m.id},
                      {"params", m.param_count},
                      {"latency", m.latencies},
                      {"validation", emit(m.validation, "val")},
                      {"test", emit(m.test, "test")}});
  }
  json manifest = {{"dataset", pool.dataset},
                   {"n_classes", pool.n_classes},
                   {"platforms", pool.platforms},
                   {"models", models}};
  const fs::path path = dir / "pool.json";
  dump(path, manifest.dump(2) + "\n");
  return path;
}

namespace {

struct SynthModel {
  double skill;
  double temperature;
};

PredictionSet synth_split(const std::vector<SynthModel>& specs, std::size_t model,
                          const std::vector<std::uint32_t>& labels,
                          const std::vector<double>& difficulty, std::size_t n_classes,
                          Rng& rng) {
  const auto& spec = specs[model];
  PredictionSet set;
  set.n_samples = labels.size();
  set.n_classes = n_classes;
  set.labels = labels;
  set.probs.resize(set.n_samples * n_classes);
  std::vector<double> z(n_classes);
  for (std::size_t i = 0; i < set.n_samples; ++i) {
    for (auto& v : z) v = rng.normal(0.0, 1.0);
    z[labels[i]] += spec.skill - difficulty[i];
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (auto& v : z) {
      v = std::exp((v - top) * spec.temperature);
      total += v;
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      set.probs[i * n_classes + c] = static_cast<float>(z[c] / total);
    }
  }
  return set;
}

// True when at least two models are mutually non-dominated on
// (validation error, params).
bool has_tradeoff(const ModelPool& pool) {
  for (std::size_t a = 0; a < pool.models.size(); ++a) {
    for (std::size_t b = a + 1; b < pool.models.size(); ++b) {
      const double ea = 1.0 - accuracy(pool.models[a].validation);
      const double eb = 1.0 - accuracy(pool.models[b].validation);
      const auto pa = pool.models[a].param_count;
      const auto pb = pool.models[b].param_count;
      if ((ea < eb && pa > pb) || (eb < ea && pb > pa)) return true;
    }
  }
  return false;
}

ModelPool synth_attempt(std::size_t n_models, std::size_t n_samples, std::size_t n_classes,
                        std::uint64_t seed, double spread) {
  Rng rng(seed);
  ModelPool pool;
  pool.dataset = "synthetic";
  pool.n_classes = n_classes;
  pool.platforms = {"cpu", "gpu"};

  std::vector<SynthModel> specs(n_models);
  std::vector<double> position(n_models);
  for (std::size_t m = 0; m < n_models; ++m) {
    position[m] = n_models == 1 ? 0.5 : static_cast<double>(m) / static_cast<double>(n_models - 1);
    specs[m].skill = 1.0 + spread * position[m] + rng.normal(0.0, 0.25);
    specs[m].temperature = 0.8 + 0.8 * rng.uniform();
  }

  auto make_labels = [&] {
    std::vector<std::uint32_t> labels(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) labels[i] = static_cast<std::uint32_t>(i % n_classes);
    std::shuffle(labels.begin(), labels.end(), rng.engine());
    return labels;
  };
  auto make_difficulty = [&] {
    std::vector<double> d(n_samples);
    for (auto& v : d) v = rng.normal(0.0, 1.0);
    return d;
  };
  const auto val_labels = make_labels();
  const auto val_difficulty = make_difficulty();
  const auto test_labels = make_labels();
  const auto test_difficulty = make_difficulty();

  for (std::size_t m = 0; m < n_models; ++m) {
    ModelRecord record;
    record.id = "m" + std::to_string(m);
    const double log_params = 5.0 + 2.5 * position[m] + rng.normal(0.0, 0.3);
    record.param_count = static_cast<std::uint64_t>(std::llround(std::pow(10.0, log_params)));
    const double gpu = 2e-3 + 1e-9 * static_cast<double>(record.param_count) * (0.7 + 0.6 * rng.uniform());
    const double cpu = 1e-2 + 2e-8 * static_cast<double>(record.param_count) * (0.7 + 0.6 * rng.uniform());
    record.latencies = {{"cpu", cpu}, {"gpu", gpu}};
    record.validation = synth_split(specs, m, val_labels, val_difficulty, n_classes, rng);
    record.test = synth_split(specs, m, test_labels, test_difficulty, n_classes, rng);
    pool.models.push_back(std::move(record));
  }
  return pool;
}

}  // namespace

ModelPool synth_pool(std::size_t n_models, std::size_t n_samples, std::size_t n_classes,
                     std::uint64_t seed) {
  if (n_models < 1) throw PoolError("synth: need at least one model");
  if (n_classes < 2 || n_samples < n_classes) {
    throw PoolError("synth: need n_samples >= n_classes >= 2");
  }
  double spread = 2.5;
  ModelPool pool;
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    pool = synth_attempt(n_models, n_samples, n_classes, seed + attempt * 0x9E3779B97F4A7C15ULL,
                         spread);
    if (n_models < 2 || has_tradeoff(pool)) break;
    spread *= 1.25;
  }
  check_pool(pool);
  return pool;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_half_split_indices(
    std::span<const std::uint32_t> labels, std::size_t n_classes, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw PoolError("split: label out of range");
    by_class[labels[i]].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& rows = by_class[c];
    if (rows.size() < 2) {
      throw PoolError("split: class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                      " samples, need at least 2");
    }
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    const std::size_t keep = (rows.size() + 1) / 2;
    first.insert(first.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(keep));
    second.insert(second.end(), rows.begin() + static_cast<std::ptrdiff_t>(keep), rows.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {std::move(first), std::move(second)};
}

PredictionSet select_rows(const PredictionSet& set, std::span<const std::size_t> rows) {
  PredictionSet out;
  out.n_samples = rows.size();
  out.n_classes = set.n_classes;
  out.probs.reserve(rows.size() * set.n_classes);
  out.labels.reserve(rows.size());
  for (auto i : rows) {
    auto r = set.row(i);
    out.probs.insert(out.probs.end(), r.begin(), r.end());
    out.labels.push_back(set.labels[i]);
  }
  return out;
}

std::pair<PredictionSet, PredictionSet> stratified_half_split(const PredictionSet& set,
                                                              std::uint64_t seed) {
  auto [first, second] = stratified_half_split_indices(set.labels, set.n_classes, seed);
  return {select_rows(set, first), select_rows(set, second)};
}

PredictionSet import_csv(const fs::path& probs_csv, const fs::path& labels_csv) {
  PredictionSet set;
  {
    std::istringstream in(slurp(probs_csv));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      std::istringstream cells(line);
      std::string cell;
      std::size_t width = 0;
      while (std::getline(cells, cell, ',')) {
        try {
          set.probs.push_back(std::stof(cell));
        } catch (const std::exception&) {
          throw PoolError(probs_csv.string() + ": line " + std::to_string(line_no) +
                          ": not a number '" + cell + "'");
        }
        ++width;
      }
      if (set.n_classes == 0) set.n_classes = width;
      if (width != set.n_classes) {
        throw PoolError(probs_csv.string() + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(width) + " columns, expected " +
                        std::to_string(set.n_classes));
      }
      ++set.n_samples;
    }
  }
  {
    std::istringstream in(slurp(labels_csv));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      try {
        set.labels.push_back(static_cast<std::uint32_t>(std::stoul(line)));
      } catch (const std::exception&) {
        throw PoolError(labels_csv.string() + ": not a class index '" + line + "'");
      }
    }
  }
  check_prediction_set(set, probs_csv.string());
  return set;
}

}  // namespace earn
