/*
 * Copyright 2026 The InvRISE Workbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Experiment orchestration: configuration, strategy comparison, CSV output,
// per-run event logs and replay.

#ifndef INVRISE_HARNESS_HPP_
#define INVRISE_HARNESS_HPP_

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/dataset.hpp"
#include "invrise/interaction.hpp"
#include "invrise/saliency.hpp"
#include "json.hpp"

namespace invrise {

struct ExperimentConfig {
  DatasetConfig dataset;
  // Load this dataset directory instead of generating one.
  std::optional<std::string> manifest;
  std::array<double, 4> split_ratios = {0.30, 0.10, 0.12, 0.48};
  int backgrounds = 8;
  ScorerConfig scorer{32, 1, 8, 16, 32};
  TrainConfig train;
  MaskSetConfig masks;
  SaliencyMethod method = SaliencyMethod::kInvRise;
  std::vector<StrategyKind> strategies{kAllStrategies.begin(), kAllStrategies.end()};
  int interactions_per_iteration = 27;
  int iteration_budget = 7;
  int refutation_count = 4;
  double pool_holdout_fraction = 0.0;
  std::optional<double> target_accuracy;
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "runs";

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (strategies.empty()) throw std::invalid_argument("config: strategies must be nonempty");
    if (backgrounds < 0) throw std::invalid_argument("config: backgrounds < 0");
    train.validate();
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json strategies = nlohmann::json::array();
  for (auto s : c.strategies) strategies.push_back(std::string(to_string(s)));
  return {
      {"dataset", {{"ok", c.dataset.ok}, {"no_seam", c.dataset.no_seam}, {"nok", c.dataset.nok},
                   {"seed", c.dataset.seed}, {"side", c.dataset.side}}},
      {"manifest", c.manifest ? nlohmann::json(*c.manifest) : nlohmann::json(nullptr)},
      {"split_ratios", c.split_ratios},
      {"backgrounds", c.backgrounds},
      {"scorer", {{"input_side", c.scorer.input_side}, {"channels", c.scorer.channels},
                  {"conv1_maps", c.scorer.conv1_maps}, {"conv2_maps", c.scorer.conv2_maps},
                  {"embedding_width", c.scorer.embedding_width},
                  {"standardize", c.scorer.standardize}}},
      {"train", {{"learning_rate", c.train.learning_rate}, {"momentum", c.train.momentum},
                 {"patience", c.train.patience}, {"max_epochs", c.train.max_epochs},
                 {"batch_size", c.train.batch_size}, {"seed", c.train.seed},
                 {"occlusion_augmentation", c.train.occlusion_augmentation},
                 {"occlusion_cells", c.train.occlusion_cells}}},
      {"masks", {{"k", c.masks.k}, {"l", c.masks.l}, {"p", c.masks.p}, {"seed", c.masks.seed},
                 {"random_shift", c.masks.random_shift}}},
      {"method", std::string(to_string(c.method))},
      {"strategies", strategies},
      {"interactions_per_iteration", c.interactions_per_iteration},
      {"iteration_budget", c.iteration_budget},
      {"refutation_count", c.refutation_count},
      {"pool_holdout_fraction", c.pool_holdout_fraction},
      {"target_accuracy", c.target_accuracy ? nlohmann::json(*c.target_accuracy) : nlohmann::json(nullptr)},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
  };
}

namespace detail {

// Copies known keys of `src` into `dst`, rejecting unknown ones.
template <typename Fn>
void read_section(const nlohmann::json& src, const char* section, Fn&& fn) {
  if (!src.is_object()) throw std::invalid_argument(std::string("config: ") + section + " must be an object");
  for (const auto& [key, value] : src.items()) {
    if (!fn(key, value)) throw std::invalid_argument(std::string("config: unknown key ") + section + "." + key);
  }
}

}  // namespace detail

// Fields absent from `j` keep their defaults.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::read_section(j, "config", [&](const std::string& key, const nlohmann::json& v) {
      if (key == "dataset") {
        detail::read_section(v, "dataset", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "ok") c.dataset.ok = x.get<int>();
          else if (k == "no_seam") c.dataset.no_seam = x.get<int>();
          else if (k == "nok") c.dataset.nok = x.get<int>();
          else if (k == "seed") c.dataset.seed = x.get<std::uint64_t>();
          else if (k == "side") c.dataset.side = x.get<int>();
          else return false;
          return true;
        });
      } else if (key == "manifest") {
        if (v.is_null()) c.manifest.reset();
        else c.manifest = v.get<std::string>();
      } else if (key == "split_ratios") {
        c.split_ratios = v.get<std::array<double, 4>>();
      } else if (key == "backgrounds") {
        c.backgrounds = v.get<int>();
      } else if (key == "scorer") {
        detail::read_section(v, "scorer", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "input_side") c.scorer.input_side = x.get<int>();
          else if (k == "channels") c.scorer.channels = x.get<int>();
          else if (k == "conv1_maps") c.scorer.conv1_maps = x.get<int>();
          else if (k == "conv2_maps") c.scorer.conv2_maps = x.get<int>();
          else if (k == "embedding_width") c.scorer.embedding_width = x.get<int>();
          else if (k == "standardize") c.scorer.standardize = x.get<bool>();
          else return false;
          return true;
        });
      } else if (key == "train") {
        detail::read_section(v, "train", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "learning_rate") c.train.learning_rate = x.get<double>();
          else if (k == "momentum") c.train.momentum = x.get<double>();
          else if (k == "patience") c.train.patience = x.get<int>();
          else if (k == "max_epochs") c.train.max_epochs = x.get<int>();
          else if (k == "batch_size") c.train.batch_size = x.get<int>();
          else if (k == "seed") c.train.seed = x.get<std::uint64_t>();
          else if (k == "occlusion_augmentation") c.train.occlusion_augmentation = x.get<double>();
          else if (k == "occlusion_cells") c.train.occlusion_cells = x.get<int>();
          else return false;
          return true;
        });
      } else if (key == "masks") {
        detail::read_section(v, "masks", [&](const std::string& k, const nlohmann::json& x) {
          if (k == "k") c.masks.k = x.get<int>();
          else if (k == "l") c.masks.l = x.get<int>();
          else if (k == "p") c.masks.p = x.get<double>();
          else if (k == "seed") c.masks.seed = x.get<std::uint64_t>();
          else if (k == "random_shift") c.masks.random_shift = x.get<bool>();
          else return false;
          return true;
        });
      } else if (key == "method") {
        c.method = parse_saliency_method(v.get<std::string>());
      } else if (key == "strategies") {
        c.strategies.clear();
        for (const auto& s : v) c.strategies.push_back(parse_strategy(s.get<std::string>()));
      } else if (key == "interactions_per_iteration") {
        c.interactions_per_iteration = v.get<int>();
      } else if (key == "iteration_budget") {
        c.iteration_budget = v.get<int>();
      } else if (key == "refutation_count") {
        c.refutation_count = v.get<int>();
      } else if (key == "pool_holdout_fraction") {
        c.pool_holdout_fraction = v.get<double>();
      } else if (key == "target_accuracy") {
        if (v.is_null()) c.target_accuracy.reset();
        else c.target_accuracy = v.get<double>();
      } else if (key == "seeds") {
        c.seeds = v.get<std::vector<std::uint64_t>>();
      } else if (key == "output_dir") {
        c.output_dir = v.get<std::string>();
      } else {
        return false;
      }
      return true;
    });
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  try {
    return experiment_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

// FNV-1a over the canonical (key-sorted, compact) JSON of the config,
// excluding the output directory.
inline std::string config_digest(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Dataset, splits and backgrounds shared by every run of one seed.
struct ExperimentData {
  Dataset dataset;
  std::vector<Image> backgrounds;
};

inline ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData out;
  if (config.manifest) {
    Manifest m = load_manifest(*config.manifest);
    out.dataset = Dataset(std::move(m.instances));
    out.backgrounds = load_backgrounds(*config.manifest);
  } else {
    out.dataset = Dataset(generate_dataset(config.dataset));
    for (int i = 0; i < config.backgrounds; ++i) {
      out.backgrounds.push_back(
          generate_background(derive_seed(config.dataset.seed, 500 + static_cast<std::uint64_t>(i)), config.dataset.side));
    }
  }
  return out;
}

inline DatasetSplits experiment_splits(const ExperimentConfig& config, const ExperimentData& data,
                                       std::uint64_t seed) {
  return split_dataset(data.dataset.instances(), config.split_ratios, derive_seed(seed, 11));
}

// The classifier every strategy of a seed starts from.
inline ConvScorer initial_classifier(const ExperimentConfig& config, const ExperimentData& data,
                                     const DatasetSplits& splits, std::uint64_t seed) {
  ConvScorer scorer(config.scorer, derive_seed(seed, 12));
  std::vector<Sample> train_set, val_set;
  for (const auto& id : splits.train) train_set.push_back({&data.dataset.at(id).image, data.dataset.at(id).label, nullptr});
  for (const auto& id : splits.validation) {
    val_set.push_back({&data.dataset.at(id).image, data.dataset.at(id).label, nullptr});
  }
  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 13);
  train(scorer, train_set, val_set, tc);
  return scorer;
}

inline RunConfig run_config(const ExperimentConfig& config, StrategyKind strategy, std::uint64_t seed) {
  RunConfig rc;
  rc.strategy = strategy;
  rc.interactions_per_iteration = config.interactions_per_iteration;
  rc.iteration_budget = config.iteration_budget;
  rc.target_accuracy = config.target_accuracy;
  rc.refutation_count = config.refutation_count;
  rc.pool_holdout_fraction = config.pool_holdout_fraction;
  rc.scorer = config.scorer;
  rc.train = config.train;
  rc.method = config.method;
  rc.masks = config.masks;
  rc.seed = seed;
  return rc;
}

struct RunRecord {
  StrategyKind strategy = StrategyKind::kRandomAdd;
  std::uint64_t seed = 0;
  std::vector<IterationMetrics> iterations;
  StopReason stop_reason = StopReason::kNone;
  double wall_seconds = 0.0;
  std::string config_digest;
  nlohmann::json log;  // full event log document
};

inline nlohmann::json run_log_document(const ExperimentConfig& config, const InteractiveLoop& loop,
                                       StrategyKind strategy, std::uint64_t seed, StopReason stop) {
  nlohmann::json initial = nlohmann::json::array();
  for (const auto& e : loop.initial_training_set()) {
    initial.push_back({{"id", e.id}, {"label", std::string(to_string(e.label))}});
  }
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : loop.metrics()) metrics.push_back(metrics_to_json(m));
  return {{"format", "invrise-run"},
          {"version", 1},
          {"config", to_json(config)},
          {"config_digest", config_digest(config)},
          {"strategy", std::string(to_string(strategy))},
          {"seed", seed},
          {"initial_training", initial},
          {"holdout", loop.holdout()},
          {"events", loop.events()},
          {"metrics", metrics},
          {"stop_reason", std::string(to_string(stop))}};
}

inline RunRecord run_strategy(const ExperimentConfig& config, const ExperimentData& data,
                              const DatasetSplits& splits, const ConvScorer& initial, StrategyKind strategy,
                              std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  InteractiveLoop loop(data.dataset, splits, data.backgrounds, run_config(config, strategy, seed), initial);
  const StopReason stop = loop.run(loop.oracle());
  RunRecord rec;
  rec.strategy = strategy;
  rec.seed = seed;
  rec.iterations = loop.metrics();
  rec.stop_reason = stop;
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.config_digest = config_digest(config);
  rec.log = run_log_document(config, loop, strategy, seed, stop);
  return rec;
}

// All configured strategies for every seed, each strategy starting from the
// same splits and initial classifier.
inline std::vector<RunRecord> compare_strategies(const ExperimentConfig& config, const ExperimentData& data) {
  config.validate();
  std::vector<RunRecord> out;
  for (const auto seed : config.seeds) {
    const DatasetSplits splits = experiment_splits(config, data, seed);
    const ConvScorer initial = initial_classifier(config, data, splits, seed);
    for (const auto strategy : config.strategies) {
      out.push_back(run_strategy(config, data, splits, initial, strategy, seed));
    }
  }
  return out;
}

inline void write_comparison_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "strategy,seed,iteration,acc,f1,mcc,T,U\n";
  char buf[160];
  for (const auto& r : records) {
    for (const auto& m : r.iterations) {
      std::snprintf(buf, sizeof(buf), "%s,%llu,%d,%.6f,%.6f,%.6f,%zu,%zu\n",
                    std::string(to_string(r.strategy)).c_str(), static_cast<unsigned long long>(r.seed),
                    m.iteration, m.accuracy, m.f1, m.mcc, m.training_size, m.pool_size);
      out << buf;
    }
  }
}

inline std::string run_log_name(StrategyKind strategy, std::uint64_t seed) {
  return std::string(to_string(strategy)) + "_seed" + std::to_string(seed) + ".json";
}

// Writes compare.csv, events/<strategy>_seed<seed>.json and timing.json
// (wall-clock only; the other files are deterministic).
inline void write_comparison(const std::filesystem::path& dir, const std::vector<RunRecord>& records) {
  std::filesystem::create_directories(dir / "events");
  {
    std::ofstream csv(dir / "compare.csv");
    if (!csv) throw Error("cannot write " + (dir / "compare.csv").string());
    write_comparison_csv(csv, records);
  }
  nlohmann::json timing = nlohmann::json::array();
  for (const auto& r : records) {
    std::ofstream log(dir / "events" / run_log_name(r.strategy, r.seed));
    if (!log) throw Error("cannot write event log for " + std::string(to_string(r.strategy)));
    log << r.log.dump(1) << '\n';
    timing.push_back({{"strategy", std::string(to_string(r.strategy))}, {"seed", r.seed}, {"wall_seconds", r.wall_seconds}});
  }
  std::ofstream(dir / "timing.json") << timing.dump(1) << '\n';
}

struct ReplayResult {
  bool verified = false;
  std::string message;
};

// Re-executes a logged run with the logged feedback and checks that queries,
// events and metrics agree exactly.
inline ReplayResult replay_run(const nlohmann::json& log) {
  try {
    if (log.at("format") != "invrise-run") return {false, "not a run log"};
    const ExperimentConfig config = experiment_config_from_json(log.at("config"));
    if (config_digest(config) != log.at("config_digest").get<std::string>()) {
      return {false, "config digest mismatch"};
    }
    const auto strategy = parse_strategy(log.at("strategy").get<std::string>());
    const auto seed = log.at("seed").get<std::uint64_t>();
    const ExperimentData data = load_experiment_data(config);
    const DatasetSplits splits = experiment_splits(config, data, seed);
    const ConvScorer initial = initial_classifier(config, data, splits, seed);
    InteractiveLoop loop(data.dataset, splits, data.backgrounds, run_config(config, strategy, seed), initial);

    std::vector<const nlohmann::json*> steps;
    for (const auto& ev : log.at("events")) {
      if (ev.at("type") == "step") steps.push_back(&ev);
    }
    std::size_t next = 0;
    std::string mismatch;
    const FeedbackProvider provider = [&](const Query& q) -> std::optional<Feedback> {
      if (next >= steps.size()) throw StateError("replay: more steps than logged");
      const auto& ev = *steps[next++];
      if (ev.at("query").get<std::string>() != q.id) {
        throw StateError("replay: step " + std::to_string(next - 1) + " selected " + q.id + ", log has " +
                         ev.at("query").get<std::string>());
      }
      if (ev.at("feedback").is_null()) return std::nullopt;
      return feedback_from_json(ev.at("feedback"));
    };
    const StopReason stop = loop.run(provider);
    const auto replayed = run_log_document(config, loop, strategy, seed, stop);
    if (replayed.at("events") != log.at("events")) return {false, "event log differs"};
    if (replayed.at("metrics") != log.at("metrics")) return {false, "metrics differ"};
    if (replayed.at("initial_training") != log.at("initial_training")) return {false, "initial training set differs"};
    return {true, "verified"};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

inline ReplayResult replay_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return {false, "cannot open " + path.string()};
  try {
    return replay_run(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    return {false, path.string() + ": " + e.what()};
  }
}

}  // namespace invrise

#endif  // INVRISE_HARNESS_HPP_
