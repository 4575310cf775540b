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

#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "earn/csv.hpp"
#include "earn/enumerate.hpp"
#include "earn/evaluator.hpp"
#include "earn/graph.hpp"
#include "earn/pool.hpp"
#include "earn/report.hpp"
#include "earn/search.hpp"

namespace earn::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Bad flag values that CLI11 cannot catch on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t jobs = 1;
  std::string output;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PoolError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes via a temporary file and rename so readers never see a partial file.
void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PoolError(tmp.string() + ": cannot write");
    out << text;
    if (!out) throw PoolError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ostringstream ss;
  writer(ss);
  write_atomic(path, ss.str());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string pick_platform(const ModelPool& pool, const std::string& requested) {
  if (requested.empty()) return pool.platforms.empty() ? std::string() : pool.platforms.front();
  if (!pool.has_platform(requested)) {
    throw UsageError("unknown platform '" + requested + "' (pool declares " +
                     std::to_string(pool.platforms.size()) + " platforms)");
  }
  return requested;
}

Split pick_split(const std::string& name) {
  try {
    return parse_split(name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<Objective> pick_objectives(const std::string& list) {
  try {
    return parse_objectives(list);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::string objectives_string(std::span<const Objective> objectives) {
  std::string s;
  for (auto o : objectives) s += (s.empty() ? "" : ",") + std::string(to_string(o));
  return s;
}

fs::path output_dir(const Globals& g, const char* fallback) {
  return g.output.empty() ? fs::path(fallback) : fs::path(g.output);
}

// ---- pool ----------------------------------------------------------------

int pool_validate(const std::string& manifest, std::ostream& out) {
  const auto pool = load_pool(manifest);
  for (const auto& m : pool.models) {
    out << m.id << " params=" << m.param_count << " val_acc=" << format_real(accuracy(m.validation))
        << " test_acc=" << format_real(accuracy(m.test));
    for (const auto& [platform, seconds] : m.latencies) {
      out << ' ' << platform << "_latency_s=" << format_real(seconds);
    }
    out << '\n';
  }
  return kSuccess;
}

// ---- search --------------------------------------------------------------

struct SearchOptions {
  std::string pool;
  std::string config_file;
  std::string manifest_file;
  std::string objectives;
  std::string platform;
  std::string split;
  std::optional<std::size_t> population, offspring, tournament, iterations, max_depth, patience;
  std::optional<double> mutation_rate, node_mutation_prob, threshold_step, initial_threshold,
      hv_epsilon;
  bool hv_stop = false;
  bool mutate_all_protocols = false;
  bool size_per_node = false;
};

int search(const SearchOptions& o, const Globals& g, std::ostream& out) {
  EarnConfig config;
  std::string pool_path = o.pool;
  std::string objectives = "error,latency,size";
  std::string platform;
  std::string split = "validation";
  bool size_per_node = o.size_per_node;

  if (!o.manifest_file.empty()) {
    json m;
    try {
      m = json::parse(read_text(o.manifest_file));
      config = parse_config(m.at("config").dump());
      if (pool_path.empty()) pool_path = m.at("pool").get<std::string>();
      const auto& ctx = m.at("context");
      objectives = ctx.at("objectives").get<std::string>();
      platform = ctx.at("platform").get<std::string>();
      split = ctx.at("split").get<std::string>();
      size_per_node = size_per_node || ctx.at("size_per_node").get<bool>();
    } catch (const json::exception& e) {
      throw PoolError(o.manifest_file + ": " + e.what());
    }
  }
  if (!o.config_file.empty()) {
    try {
      config = parse_config(read_text(o.config_file), config);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (o.population) config.population_limit = *o.population;
  if (o.offspring) config.offspring_limit = *o.offspring;
  if (o.tournament) config.tournament_size = *o.tournament;
  if (o.iterations) config.iterations = *o.iterations;
  if (o.max_depth) config.max_depth = *o.max_depth;
  if (o.patience) config.hv_patience = *o.patience;
  if (o.mutation_rate) config.mutation_rate = *o.mutation_rate;
  if (o.node_mutation_prob) config.node_mutation_prob = *o.node_mutation_prob;
  if (o.threshold_step) config.threshold_step = *o.threshold_step;
  if (o.initial_threshold) config.initial_threshold = *o.initial_threshold;
  if (o.hv_epsilon) config.hv_epsilon = *o.hv_epsilon;
  if (o.hv_stop) config.hv_stop = true;
  if (o.mutate_all_protocols) config.mutate_all_protocols = true;
  if (g.seed_set) config.seed = g.seed;
  if (!o.objectives.empty()) objectives = o.objectives;
  if (!o.platform.empty()) platform = o.platform;
  if (!o.split.empty()) split = o.split;
  try {
    config.check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (pool_path.empty()) throw UsageError("search needs a pool manifest");

  const auto pool = load_pool(pool_path);
  EvalContext ctx;
  ctx.split = pick_split(split);
  ctx.platform = pick_platform(pool, platform);
  ctx.objectives = pick_objectives(objectives);
  ctx.size_per_node = size_per_node;

  const fs::path dir = output_dir(g, "earn-run");
  fs::create_directories(dir);
  json manifest = {{"tool", "earn"},
                   {"version", kVersion},
                   {"command", "search"},
                   {"pool", fs::absolute(pool_path).lexically_normal().string()},
                   {"config", json::parse(config_to_json(config))},
                   {"context",
                    {{"split", std::string(to_string(ctx.split))},
                     {"platform", ctx.platform},
                     {"objectives", objectives_string(ctx.objectives)},
                     {"size_per_node", ctx.size_per_node}}},
                   {"jobs", g.jobs},
                   {"output", fs::absolute(dir).lexically_normal().string()},
                   {"started_at_utc", utc_now()}};
  write_atomic(dir / "run_manifest.json", manifest.dump(2) + "\n");

  const auto result = run(pool, config, ctx, g.jobs);

  write_file(dir / "archive.csv", [&](std::ostream& s) { write_archive_csv(s, result.archive); });
  write_file(dir / "archive.json", [&](std::ostream& s) { write_archive_json(s, result.archive); });
  write_file(dir / "history.csv", [&](std::ostream& s) { write_history_csv(s, result.history); });
  write_file(dir / "population.json",
             [&](std::ostream& s) { write_population_json(s, result.population, ctx.objectives); });

  const auto& last = result.history.back();
  out << "generations " << last.generation << ", offspring evaluations "
      << result.offspring_evaluations << ", archive " << result.archive.size()
      << " entries, hypervolume " << format_real(last.hypervolume)
      << (result.stopped_on_hypervolume ? " (stopped on hypervolume)" : "") << '\n';
  out << "wrote " << dir.string() << '\n';
  return kSuccess;
}

// ---- eval ----------------------------------------------------------------

int eval(const std::string& graph_file, const std::string& pool_path, const std::string& split,
         const std::string& platform, bool size_per_node, std::ostream& out) {
  const auto pool = load_pool(pool_path);
  const Node graph = deserialize(read_text(graph_file), pool, std::numeric_limits<std::size_t>::max());
  EvalContext ctx;
  ctx.split = pick_split(split);
  ctx.platform = pick_platform(pool, platform);
  ctx.size_per_node = size_per_node;
  const Evaluator evaluator(pool, ctx);
  const auto v = evaluator.evaluate(graph);
  json result = {{"error", v.error},
                 {"latency_s", v.latency},
                 {"size_params", v.size},
                 {"split", std::string(to_string(ctx.split))},
                 {"platform", ctx.platform},
                 {"negative_weights", has_negative_weights(graph)}};
  out << result.dump() << '\n';
  return kSuccess;
}

// ---- enumerate -----------------------------------------------------------

struct EnumerateOptions {
  std::string pool;
  std::string strategy = "bagging";
  std::size_t k = 3;
  std::string protocols;
  double grid_step = 0.01;
  std::vector<double> grid;
  bool include_singles = false;
  std::string platform;
  std::string split = "validation";
  std::string file;
};

int enumerate(const EnumerateOptions& o, const Globals& g, std::ostream& out) {
  const auto pool = load_pool(o.pool);
  EvalContext ctx;
  ctx.split = pick_split(o.split);
  ctx.platform = pick_platform(pool, o.platform);
  const Evaluator evaluator(pool, ctx);

  std::vector<EnumResult> results;
  if (o.include_singles) results = enumerate_singles(evaluator);
  std::vector<EnumResult> batch;
  if (o.strategy == "chain2") {
    std::vector<double> grid = o.grid.empty() ? threshold_grid(o.grid_step) : o.grid;
    for (double t : grid) {
      if (!(t >= 0.0 && t <= 1.0)) throw UsageError("grid values must be in [0, 1]");
    }
    if (pool.models.size() < 2) throw UsageError("chain2 needs at least two models");
    batch = enumerate_chains2(evaluator, grid, g.jobs);
  } else if (o.strategy == "bagging" || o.strategy == "boosting") {
    std::vector<MergeProtocol> protocols;
    if (o.protocols.empty()) {
      protocols = o.strategy == "bagging"
                      ? std::vector{MergeProtocol::kAverage, MergeProtocol::kVoting, MergeProtocol::kMax}
                      : std::vector{MergeProtocol::kWeightedAverage, MergeProtocol::kWeightedVoting,
                                    MergeProtocol::kWeightedMax};
    } else {
      std::stringstream ss(o.protocols);
      std::string name;
      while (std::getline(ss, name, ',')) {
        const auto p = parse_protocol(name);
        if (!p) throw UsageError("unknown protocol '" + name + "'");
        protocols.push_back(*p);
      }
    }
    if (o.k < 2 || o.k > pool.models.size()) throw UsageError("--k must be in [2, pool size]");
    batch = enumerate_merged(evaluator, o.k, protocols, g.jobs);
  } else {
    throw UsageError("unknown strategy '" + o.strategy + "'");
  }
  results.insert(results.end(), std::make_move_iterator(batch.begin()),
                 std::make_move_iterator(batch.end()));

  if (!o.file.empty() || !g.output.empty()) {
    fs::path path = o.file.empty() ? fs::path(g.output) : fs::path(o.file);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, [&](std::ostream& s) { write_enum_csv(s, results); });
  } else {
    write_enum_csv(out, results);
  }
  return kSuccess;
}

// ---- report --------------------------------------------------------------

int report(const std::vector<std::string>& inputs, const std::string& pool_path,
           const std::string& platform, const std::string& split, const Globals& g,
           std::ostream& out) {
  const auto pool = load_pool(pool_path);
  const auto reference = reference_model(pool, pick_split(split), pick_platform(pool, platform));
  std::vector<ResultRow> rows;
  for (const auto& input : inputs) {
    auto part = read_result_csv(input);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  const auto summary = summarize(rows, reference);

  const fs::path dir = output_dir(g, "earn-report");
  fs::create_directories(dir);
  const std::pair<Objective, Objective> pairs[] = {{Objective::kLatency, Objective::kError},
                                                   {Objective::kSize, Objective::kError},
                                                   {Objective::kSize, Objective::kLatency}};
  for (const auto& [x, y] : pairs) {
    const auto front = front_2d(rows, x, y);
    const std::string name = "front_" + std::string(to_string(y)) + "_vs_" +
                             std::string(to_string(x)) + ".csv";
    write_file(dir / name, [&](std::ostream& s) { write_front_csv(s, front, x, y); });
  }
  write_file(dir / "summary.txt", [&](std::ostream& s) { write_summary(s, summary); });
  write_summary(out, summary);
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evolutionary search for Pareto-optimal ensembles of pretrained classifiers", "earn"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every random decision");
  app.add_option("--jobs", g.jobs, "Maximum evaluation threads")->check(CLI::PositiveNumber);
  app.add_option("-o,--output", g.output, "Output directory (or file for enumerate)");

  // pool
  auto* pool_cmd = app.add_subcommand("pool", "Validate, synthesize, split or import prediction data");
  pool_cmd->require_subcommand(1);
  std::string validate_path;
  auto* validate_cmd = pool_cmd->add_subcommand("validate", "Load a pool and print per-model stats");
  validate_cmd->add_option("manifest", validate_path, "pool.json")->required();

  std::size_t synth_models = 8, synth_samples = 500, synth_classes = 10;
  auto* synth_cmd = pool_cmd->add_subcommand("synth", "Write a synthetic pool");
  synth_cmd->add_option("--models", synth_models)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--samples", synth_samples)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--classes", synth_classes)->check(CLI::Range(2, 1 << 20));

  std::string split_probs, split_labels, split_prefix;
  auto* split_cmd = pool_cmd->add_subcommand("split", "Stratified half split of one prediction set");
  split_cmd->add_option("--probs", split_probs, "EPRD file")->required();
  split_cmd->add_option("--labels", split_labels, "ELBL file")->required();
  split_cmd->add_option("--out-prefix", split_prefix, "Writes <prefix>.a.* and <prefix>.b.*")->required();

  std::string csv_probs, csv_labels, csv_out_probs, csv_out_labels;
  auto* import_cmd = pool_cmd->add_subcommand("import-csv", "Convert CSV matrices to binary files");
  import_cmd->add_option("--probs-csv", csv_probs)->required();
  import_cmd->add_option("--labels-csv", csv_labels)->required();
  import_cmd->add_option("--out-probs", csv_out_probs)->required();
  import_cmd->add_option("--out-labels", csv_out_labels)->required();

  // search
  SearchOptions so;
  auto* search_cmd = app.add_subcommand("search", "Run the evolutionary search");
  search_cmd->add_option("pool", so.pool, "pool.json");
  search_cmd->add_option("--config", so.config_file, "JSON run configuration");
  search_cmd->add_option("--manifest", so.manifest_file, "Replay a run_manifest.json");
  search_cmd->add_option("--objectives", so.objectives, "Subset of error,latency,size");
  search_cmd->add_option("--platform", so.platform);
  search_cmd->add_option("--split", so.split, "validation or test");
  search_cmd->add_option("--population", so.population, "Population limit M");
  search_cmd->add_option("--offspring", so.offspring, "Offspring limit C");
  search_cmd->add_option("--tournament", so.tournament, "Tournament size K");
  search_cmd->add_option("--iterations", so.iterations, "Generations I");
  search_cmd->add_option("--mutation-rate", so.mutation_rate, "m_r");
  search_cmd->add_option("--node-mutation-prob", so.node_mutation_prob, "m_p");
  search_cmd->add_option("--threshold-step", so.threshold_step);
  search_cmd->add_option("--initial-threshold", so.initial_threshold);
  search_cmd->add_option("--max-depth", so.max_depth);
  search_cmd->add_flag("--hv-stop", so.hv_stop, "Stop when the hypervolume stagnates");
  search_cmd->add_option("--hv-epsilon", so.hv_epsilon);
  search_cmd->add_option("--hv-patience", so.patience);
  search_cmd->add_flag("--mutate-all-protocols", so.mutate_all_protocols);
  search_cmd->add_flag("--size-per-node", so.size_per_node);

  // eval
  std::string eval_graph, eval_pool, eval_split = "validation", eval_platform;
  bool eval_size_per_node = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a serialized ensemble");
  eval_cmd->add_option("graph", eval_graph, "graph JSON file")->required();
  eval_cmd->add_option("--pool", eval_pool)->required();
  eval_cmd->add_option("--split", eval_split);
  eval_cmd->add_option("--platform", eval_platform);
  eval_cmd->add_flag("--size-per-node", eval_size_per_node);

  // enumerate
  EnumerateOptions eo;
  auto* enum_cmd = app.add_subcommand("enumerate", "Exhaustive bagging, boosting or 2-chain baselines");
  enum_cmd->add_option("--pool", eo.pool)->required();
  enum_cmd->add_option("--strategy", eo.strategy, "bagging, boosting or chain2");
  enum_cmd->add_option("--k", eo.k, "Ensemble size for bagging/boosting");
  enum_cmd->add_option("--protocols", eo.protocols, "Comma-separated merge protocols");
  enum_cmd->add_option("--grid-step", eo.grid_step, "Threshold grid step for chain2");
  enum_cmd->add_option("--grid", eo.grid, "Explicit threshold grid")->delimiter(',');
  enum_cmd->add_flag("--include-singles", eo.include_singles, "Also emit every single model");
  enum_cmd->add_option("--platform", eo.platform);
  enum_cmd->add_option("--split", eo.split);
  enum_cmd->add_option("--csv", eo.file, "Output CSV file");

  // report
  std::vector<std::string> report_inputs;
  std::string report_pool, report_platform, report_split = "validation";
  auto* report_cmd = app.add_subcommand("report", "Pareto-front plot data and a gains summary");
  report_cmd->add_option("inputs", report_inputs, "archive or enumeration CSV files")->required();
  report_cmd->add_option("--pool", report_pool)->required();
  report_cmd->add_option("--platform", report_platform);
  report_cmd->add_option("--split", report_split);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (*validate_cmd) return pool_validate(validate_path, out);
    if (*synth_cmd) {
      const auto pool = synth_pool(synth_models, synth_samples, synth_classes, g.seed);
      const auto manifest = write_pool(pool, output_dir(g, "synthetic-pool"));
      out << "wrote " << manifest.string() << '\n';
      return kSuccess;
    }
    if (*split_cmd) {
      PredictionSet set = read_predictions(split_probs);
      set.labels = read_labels(split_labels);
      check_prediction_set(set, split_probs);
      const auto [a, b] = stratified_half_split(set, g.seed);
      write_predictions(split_prefix + ".a.eprd", a);
      write_labels(split_prefix + ".a.elbl", a.labels);
      write_predictions(split_prefix + ".b.eprd", b);
      write_labels(split_prefix + ".b.elbl", b.labels);
      out << "a: " << a.n_samples << " samples, b: " << b.n_samples << " samples\n";
      return kSuccess;
    }
    if (*import_cmd) {
      const auto set = import_csv(csv_probs, csv_labels);
      write_predictions(csv_out_probs, set);
      write_labels(csv_out_labels, set.labels);
      out << set.n_samples << " samples, " << set.n_classes << " classes\n";
      return kSuccess;
    }
    if (*search_cmd) return search(so, g, out);
    if (*eval_cmd) return eval(eval_graph, eval_pool, eval_split, eval_platform, eval_size_per_node, out);
    if (*enum_cmd) return enumerate(eo, g, out);
    if (*report_cmd) return report(report_inputs, report_pool, report_platform, report_split, g, out);
  } catch (const UsageError& e) {
    err << "earn: " << e.what() << '\n';
    return kUsage;
  } catch (const PoolError& e) {
    err << "earn: " << e.what() << '\n';
    return kDataError;
  } catch (const GraphError& e) {
    err << "earn: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "earn: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "earn: internal error: " << e.what() << '\n';
    return kInternal;
  }
  err << app.help();
  return kUsage;
}

}  // namespace earn::cli
