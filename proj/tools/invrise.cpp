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

// invrise: command-line front end.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "invrise/bridge.hpp"
#include "invrise/harness.hpp"
#include "invrise/metrics.hpp"
#include "invrise/service.hpp"

namespace fs = std::filesystem;
using namespace invrise;

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* text = std::getenv("INVRISE_SEED");
  if (!text || !*text) return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text, &end, 10);
  if (*end != '\0') throw std::invalid_argument(std::string("INVRISE_SEED is not an integer: ") + text);
  return v;
}

std::vector<const LabeledInstance*> select(const Dataset& data, const std::vector<std::string>& ids) {
  std::vector<const LabeledInstance*> out;
  for (const auto& id : ids) out.push_back(&data.at(id));
  return out;
}

const std::vector<std::string>& split_by_name(const DatasetSplits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test;
  if (name == "interactive") return s.interactive;
  throw std::invalid_argument("unknown split: " + name);
}

// Flags shared by subcommands that take an experiment config.
struct ConfigFlags {
  std::string path;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> strategies;
  std::string out;
  std::optional<int> budget, per_iteration, k;
  std::optional<std::string> method;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", path, "experiment config (JSON)");
    cmd->add_option("--seeds", seeds, "override seeds");
    cmd->add_option("--strategies", strategies, "override strategy set");
    cmd->add_option("--out", out, "override output directory");
    cmd->add_option("--budget", budget, "override iteration budget");
    cmd->add_option("--per-iteration", per_iteration, "override interactions per iteration");
    cmd->add_option("-k,--masks", k, "override number of masks");
    cmd->add_option("--method", method, "override saliency method (RISE or InvRISE)");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
    if (!seeds.empty()) c.seeds = seeds;
    if (const auto s = env_seed()) c.seeds = {*s};
    if (!strategies.empty()) {
      c.strategies.clear();
      for (const auto& s : strategies) c.strategies.push_back(parse_strategy(s));
    }
    if (!out.empty()) c.output_dir = out;
    if (budget) c.iteration_budget = *budget;
    if (per_iteration) c.interactions_per_iteration = *per_iteration;
    if (k) c.masks.k = *k;
    if (method) c.method = parse_saliency_method(*method);
    c.validate();
    return c;
  }
};

int gen_data(std::uint64_t seed, const DatasetConfig& base, int backgrounds, const std::vector<double>& ratios,
             const std::string& out) {
  DatasetConfig dc = base;
  dc.seed = env_seed().value_or(seed);
  if (ratios.size() != 4) throw std::invalid_argument("--splits needs four ratios");
  const auto data = generate_dataset(dc);
  const auto splits = split_dataset(data, {ratios[0], ratios[1], ratios[2], ratios[3]}, derive_seed(dc.seed, 11));
  save_manifest(data, splits, out);
  std::vector<Image> bgs;
  for (int i = 0; i < backgrounds; ++i) {
    bgs.push_back(generate_background(derive_seed(dc.seed, 500 + static_cast<std::uint64_t>(i)), dc.side));
  }
  save_backgrounds(bgs, out);
  std::printf("wrote %zu instances (%zu/%zu/%zu/%zu) and %d backgrounds to %s\n", data.size(), splits.train.size(),
              splits.validation.size(), splits.test.size(), splits.interactive.size(), backgrounds, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"InvRISE workbench: saliency, neighbor retrieval and interactive learning"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::uint64_t gen_seed = 0;
  DatasetConfig gen_cfg;
  int gen_backgrounds = 8;
  std::vector<double> gen_splits{0.30, 0.10, 0.12, 0.48};
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--ok", gen_cfg.ok, "OK instances");
  gen->add_option("--no-seam", gen_cfg.no_seam, "no-seam instances (NOK)");
  gen->add_option("--nok", gen_cfg.nok, "seam defect instances (NOK)");
  gen->add_option("--side", gen_cfg.side, "image side");
  gen->add_option("--backgrounds", gen_backgrounds, "background textures for composites");
  gen->add_option("--splits", gen_splits, "train validation test interactive ratios")->expected(4);
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train the built-in scorer");
  std::string tr_data, tr_out;
  ScorerConfig tr_scorer;
  TrainConfig tr_cfg;
  std::uint64_t tr_init = 0;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--input-side", tr_scorer.input_side, "network input side");
  tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  tr->add_option("--momentum", tr_cfg.momentum, "momentum");
  tr->add_option("--epochs", tr_cfg.max_epochs, "maximum epochs");
  tr->add_option("--patience", tr_cfg.patience, "early-stopping patience");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--occlusion", tr_cfg.occlusion_augmentation, "occlusion augmentation probability");
  tr->add_option("--seed", tr_init, "initialization and shuffling seed");

  // explain
  auto* ex = app.add_subcommand("explain", "saliency map and overlay for one instance");
  std::string ex_id, ex_data, ex_model, ex_out, ex_method = "InvRISE", ex_target;
  MaskSetConfig ex_masks;
  ex->add_option("id", ex_id, "instance id")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--model", ex_model, "checkpoint")->required();
  ex->add_option("--out", ex_out, "output prefix (writes .json and .png)")->required();
  ex->add_option("--method", ex_method, "RISE or InvRISE");
  ex->add_option("--target", ex_target, "target class (default: predicted)");
  ex->add_option("-k,--masks", ex_masks.k, "number of masks");
  ex->add_option("--cells", ex_masks.l, "mask grid cells per side");
  ex->add_option("--mask-seed", ex_masks.seed, "mask sampling seed");
  ex->add_flag("--shift", ex_masks.random_shift, "randomly shifted masks");

  // eval-explanations
  auto* ev = app.add_subcommand("eval-explanations", "dice / jaccard / hit accuracy table");
  std::string ev_data, ev_model, ev_split = "test", ev_out;
  MaskSetConfig ev_masks;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--model", ev_model, "checkpoint")->required();
  ev->add_option("--split", ev_split, "split to evaluate");
  ev->add_option("--out", ev_out, "CSV path (default stdout)");
  ev->add_option("-k,--masks", ev_masks.k, "number of masks");
  ev->add_option("--mask-seed", ev_masks.seed, "mask sampling seed");
  ev->add_flag("--shift", ev_masks.random_shift, "randomly shifted masks");

  // compare
  auto* cmp = app.add_subcommand("compare", "run the strategy comparison");
  ConfigFlags cmp_flags;
  cmp_flags.add(cmp);

  // replay
  auto* rp = app.add_subcommand("replay", "re-execute a logged run and verify it");
  std::vector<std::string> rp_logs;
  rp->add_option("logs", rp_logs, "event log files")->required();

  // serve
  auto* sv = app.add_subcommand("serve", "live session HTTP service");
  ConfigFlags sv_flags;
  sv_flags.add(sv);
  std::string sv_host = "127.0.0.1", sv_strategy = "NearCAIPI", sv_model;
  int sv_port = 8080;
  sv->add_option("--host", sv_host, "bind address");
  sv->add_option("--port", sv_port, "port");
  sv->add_option("--strategy", sv_strategy, "session strategy");
  sv->add_option("--model", sv_model, "start from this checkpoint instead of training");

  // bridge
  auto* br = app.add_subcommand("bridge", "serve a checkpoint over the bridge protocol on stdin/stdout");
  std::string br_model;
  br->add_option("--model", br_model, "checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gen_data(gen_seed, gen_cfg, gen_backgrounds, gen_splits, gen_out);

    if (tr->parsed()) {
      const Manifest m = load_manifest(tr_data);
      const Dataset data(m.instances);
      if (const auto s = env_seed()) tr_init = *s;
      tr_cfg.seed = derive_seed(tr_init, 13);
      ConvScorer scorer(tr_scorer, derive_seed(tr_init, 12));
      std::vector<Sample> train_set, val_set;
      for (const auto* x : select(data, m.splits.train)) {
        train_set.push_back({&x->image, x->label, x->defect_mask ? &*x->defect_mask : nullptr});
      }
      for (const auto* x : select(data, m.splits.validation)) val_set.push_back({&x->image, x->label, nullptr});
      const TrainLog log = train(scorer, train_set, val_set, tr_cfg);
      scorer.save(tr_out);
      const auto test = select(data, m.splits.test.empty() ? m.splits.validation : m.splits.test);
      const auto cm = classification_metrics(evaluate_classifier(scorer, test));
      std::printf("epochs %zu best %d test acc %.4f f1 %.4f mcc %.4f -> %s\n", log.epochs.size(), log.best_epoch,
                  cm.accuracy, cm.f1, cm.mcc, tr_out.c_str());
      return 0;
    }

    if (ex->parsed()) {
      const Manifest m = load_manifest(ex_data);
      const Dataset data(m.instances);
      const ConvScorer scorer = ConvScorer::load(ex_model);
      const LabeledInstance& x = data.at(ex_id);
      ex_masks.side = x.image.side();
      const MaskSet masks = MaskSet::sample(ex_masks);
      const double f = scorer.predict(x.image);
      const Label target = ex_target.empty() ? predicted_label(f) : parse_label(ex_target);
      const SaliencyMap map = explain(parse_saliency_method(ex_method), x.image, scorer, masks, target);
      save_saliency(ex_out + ".json", map);
      save_png(ex_out + ".png", saliency_overlay(x.image, map));
      const auto ix = argmax_pixel(map);
      std::printf("%s: nok confidence %.6f, target %s, argmax (%zu, %zu)", ex_id.c_str(), f,
                  std::string(to_string(target)).c_str(), ix / static_cast<std::size_t>(map.side()),
                  ix % static_cast<std::size_t>(map.side()));
      if (x.defect_mask && count_ones(*x.defect_mask) > 0) {
        std::printf(", hit %s", hit(map, *x.defect_mask) ? "yes" : "no");
      }
      std::printf("\n");
      return 0;
    }

    if (ev->parsed()) {
      const Manifest m = load_manifest(ev_data);
      const Dataset data(m.instances);
      const ConvScorer scorer = ConvScorer::load(ev_model);
      const auto instances = select(data, split_by_name(m.splits, ev_split));
      std::vector<const LabeledInstance*> nok;
      for (const auto* x : instances) {
        if (x->label == Label::kNok) nok.push_back(x);
      }
      if (!instances.empty()) ev_masks.side = instances.front()->image.side();
      const MaskSet masks = MaskSet::sample(ev_masks);
      std::ofstream file;
      if (!ev_out.empty()) {
        file.open(ev_out);
        if (!file) throw Error("cannot write " + ev_out);
      }
      std::ostream& out = ev_out.empty() ? std::cout : file;
      write_explanation_csv_header(out);
      const std::string model = fs::path(ev_model).stem().string();
      for (auto method : {SaliencyMethod::kRise, SaliencyMethod::kInvRise}) {
        write_explanation_csv_row(out, method, model, evaluate_explanations(nok, scorer, method, masks));
      }
      return 0;
    }

    if (cmp->parsed()) {
      const ExperimentConfig config = cmp_flags.resolve();
      const ExperimentData data = load_experiment_data(config);
      const auto records = compare_strategies(config, data);
      write_comparison(config.output_dir, records);
      std::printf("wrote %zu runs to %s (config %s)\n", records.size(), config.output_dir.c_str(),
                  config_digest(config).c_str());
      return 0;
    }

    if (rp->parsed()) {
      int failures = 0;
      for (const auto& path : rp_logs) {
        const ReplayResult r = replay_file(path);
        std::printf("%s: %s\n", path.c_str(), r.message.c_str());
        if (!r.verified) ++failures;
      }
      if (failures > 0) std::fprintf(stderr, "replay: %d of %zu runs not verified\n", failures, rp_logs.size());
      return failures == 0 ? 0 : 1;
    }

    if (sv->parsed()) {
      const ExperimentConfig config = sv_flags.resolve();
      const StrategyKind strategy = parse_strategy(sv_strategy);
      const std::uint64_t seed = config.seeds.front();
      std::unique_ptr<StudioService> service;
      if (sv_model.empty()) {
        service = std::make_unique<StudioService>(config, strategy, seed);
      } else {
        service = std::make_unique<StudioService>(config, strategy, seed, ConvScorer::load(sv_model));
      }
      httplib::Server server;
      service->bind(server);
      if (!server.bind_to_port(sv_host, sv_port)) {
        throw Error("cannot listen on " + sv_host + ":" + std::to_string(sv_port));
      }
      std::fprintf(stderr, "serving %s session (seed %llu) on http://%s:%d\n", sv_strategy.c_str(),
                   static_cast<unsigned long long>(seed), sv_host.c_str(), sv_port);
      return server.listen_after_bind() ? 0 : 1;
    }

    if (br->parsed()) {
      const ConvScorer scorer = ConvScorer::load(br_model);
      serve_bridge(scorer, std::cin, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "invrise: %s\n", e.what());
    return 1;
  }
  return 0;
}
