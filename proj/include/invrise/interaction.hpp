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

// The interactive learning loop: query selection, feedback, refutations,
// near hits and misses, and periodic retraining.
//
// A step is split in two so a live session can pause between them:
// prepare_query() picks the instance and apply_feedback() mutates the
// training set. run() drives both with the simulated oracle.

#ifndef INVRISE_INTERACTION_HPP_
#define INVRISE_INTERACTION_HPP_

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/dataset.hpp"
#include "invrise/imaging.hpp"
#include "invrise/metrics.hpp"
#include "invrise/neighbors.hpp"
#include "invrise/saliency.hpp"
#include "json.hpp"

namespace invrise {

enum class StrategyKind { kRandomAdd, kActiveLearning, kNearAL, kCaipi, kNearCaipi };

inline constexpr std::array<StrategyKind, 5> kAllStrategies = {
    StrategyKind::kRandomAdd, StrategyKind::kActiveLearning, StrategyKind::kNearAL,
    StrategyKind::kCaipi, StrategyKind::kNearCaipi};

inline std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandomAdd: return "RandomAdd";
    case StrategyKind::kActiveLearning: return "AL";
    case StrategyKind::kNearAL: return "NearAL";
    case StrategyKind::kCaipi: return "CAIPI";
    case StrategyKind::kNearCaipi: return "NearCAIPI";
  }
  return "?";
}

inline StrategyKind parse_strategy(std::string_view text) {
  for (auto kind : kAllStrategies) {
    if (to_string(kind) == text) return kind;
  }
  if (text == "ActiveLearning") return StrategyKind::kActiveLearning;
  throw std::invalid_argument("unknown strategy: " + std::string(text));
}

inline bool uses_refutations(StrategyKind kind) {
  return kind == StrategyKind::kCaipi || kind == StrategyKind::kNearCaipi;
}

inline bool uses_neighbors(StrategyKind kind) {
  return kind == StrategyKind::kNearAL || kind == StrategyKind::kNearCaipi;
}

enum class FeedbackSource { kOracle, kHuman };

struct Feedback {
  bool prediction_correct = true;
  bool explanation_correct = true;
  std::optional<Label> corrected_label;
  // Absent with explanation_correct = false on an OK label: the whole image
  // is the region, there is no defect to mark.
  std::optional<BinaryMask> corrected_mask;
  FeedbackSource source = FeedbackSource::kOracle;

  void validate() const {
    if (!prediction_correct && !corrected_label) {
      throw std::invalid_argument("feedback: wrong prediction without corrected label");
    }
    const bool ok_label = corrected_label && *corrected_label == Label::kOk;
    if (!explanation_correct && !corrected_mask && !ok_label) {
      throw std::invalid_argument("feedback: rejected explanation without corrected mask");
    }
    if (corrected_mask && count_ones(*corrected_mask) == 0) {
      throw std::invalid_argument("feedback: corrected mask is empty");
    }
  }

  bool operator==(const Feedback&) const = default;
};

// The simulated expert: always corrects by the ground truth.
inline Feedback oracle_feedback(const LabeledInstance& instance, double nok_confidence,
                                const SaliencyMap* /*saliency*/ = nullptr) {
  Feedback fb;
  fb.prediction_correct = predicted_label(nok_confidence) == instance.label;
  fb.explanation_correct = false;
  fb.corrected_label = instance.label;
  if (instance.label == Label::kNok && instance.defect_mask && count_ones(*instance.defect_mask) > 0) {
    fb.corrected_mask = instance.defect_mask;
  }
  fb.source = FeedbackSource::kOracle;
  return fb;
}

// --- Refutations ----------------------------------------------------------

struct Refutation {
  Image image;
  Label label = Label::kOk;
  std::string source_id;
  std::string transform;
};

// Default recipe: zoom-in x2 on the anomaly box, zoom-out x0.5, one dihedral
// augmentation, and the defect composited onto a background texture (a
// second augmentation for OK instances). Counts above 4 append further
// augmentations.
inline std::vector<Refutation> generate_refutations(const std::string& source_id, const Image& image,
                                                    const std::optional<BinaryMask>& mask, Label label,
                                                    std::span<const Image> backgrounds, int count,
                                                    Rng& rng) {
  if (count < 0) throw std::invalid_argument("generate_refutations: count < 0");
  std::optional<Box> box;
  if (label == Label::kNok) {
    if (!mask || mask->side() != image.side()) {
      throw std::invalid_argument("generate_refutations: NOK refutations need a mask of the image size");
    }
    box = bounding_box(*mask);
    if (!box) throw std::invalid_argument("generate_refutations: NOK refutations need a nonempty mask");
  } else {
    box = full_frame(image.side());
  }
  auto augmentation = [&](std::vector<Refutation>& out) {
    const Augmentation op = kAllAugmentations[rng.below(kAllAugmentations.size())];
    out.push_back({augment(image, op), label, source_id, "augment:" + std::string(to_string(op))});
  };
  std::vector<Refutation> out;
  for (int i = 0; i < count; ++i) {
    if (i == 0) {
      out.push_back({zoom_region(image, *box, 2.0), label, source_id, "zoom-in:2"});
    } else if (i == 1) {
      out.push_back({zoom_region(image, *box, 0.5), label, source_id, "zoom-out:0.5"});
    } else if (i == 3 && label == Label::kNok) {
      if (backgrounds.empty()) {
        warn("generate_refutations: no background textures, using an augmentation instead");
        augmentation(out);
        continue;
      }
      const int side = image.side();
      const int patch_side = std::min(side, std::max(box->height(), box->width()));
      const int r0 = std::clamp(box->row0 - (patch_side - box->height()) / 2, 0, side - patch_side);
      const int c0 = std::clamp(box->col0 - (patch_side - box->width()) / 2, 0, side - patch_side);
      const std::size_t bg_index = rng.below(backgrounds.size());
      Image background = backgrounds[bg_index];
      if (background.channels() != image.channels()) background = convert_channels(background, image.channels());
      if (background.side() != side) background = resize_bilinear(background, side);
      const Offset offset{rng.uniform_int(0, side - patch_side), rng.uniform_int(0, side - patch_side)};
      auto pasted = composite(crop(image, r0, c0, patch_side), crop(*mask, r0, c0, patch_side), background, offset);
      out.push_back({std::move(pasted.image), label, source_id,
                     "composite:bg" + std::to_string(bg_index) + "@" + std::to_string(offset.row) + "," +
                         std::to_string(offset.col)});
    } else {
      augmentation(out);
    }
  }
  return out;
}

// --- Loop -----------------------------------------------------------------

struct RunConfig {
  StrategyKind strategy = StrategyKind::kNearCaipi;
  int interactions_per_iteration = 27;
  int iteration_budget = 7;
  std::optional<double> target_accuracy;  // stop once test accuracy reaches it
  int refutation_count = 4;
  bool near_branch = true;  // ablation switch for the hit/miss branch
  double pool_holdout_fraction = 0.0;
  ScorerConfig scorer;
  TrainConfig train;  // seed is replaced by per-retraining derived seeds
  SaliencyMethod method = SaliencyMethod::kInvRise;
  MaskSetConfig masks;
  double explanation_fraction = 0.10;  // top fraction kept from accepted explanations
  std::uint64_t seed = 0;
};

struct IterationMetrics {
  int iteration = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  std::size_t training_size = 0;
  std::size_t pool_size = 0;

  bool operator==(const IterationMetrics&) const = default;
};

struct TrainingEntry {
  std::string id;
  Label label = Label::kOk;
  std::string provenance;              // empty for dataset instances
  std::shared_ptr<const Image> image;  // refutations only
};

struct Query {
  std::string id;
  double confidence = 0.0;  // NOK confidence
  Label predicted = Label::kOk;
};

enum class StopReason { kNone, kBudget, kPoolExhausted, kTargetAccuracy };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::kNone: return "none";
    case StopReason::kBudget: return "budget";
    case StopReason::kPoolExhausted: return "pool-exhausted";
    case StopReason::kTargetAccuracy: return "target-accuracy";
  }
  return "?";
}

inline nlohmann::json mask_to_json(const BinaryMask& mask) {
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) on.push_back(i);
  }
  return {{"side", mask.side()}, {"pixels", on}};
}

inline BinaryMask mask_from_json(const nlohmann::json& j) {
  BinaryMask mask(j.at("side").get<int>());
  for (auto i : j.at("pixels").get<std::vector<std::size_t>>()) {
    if (i >= mask.size()) throw std::invalid_argument("mask pixel index out of range");
    mask[i] = 1;
  }
  return mask;
}

inline nlohmann::json feedback_to_json(const Feedback& fb) {
  nlohmann::json j = {{"prediction_correct", fb.prediction_correct},
                      {"explanation_correct", fb.explanation_correct},
                      {"source", fb.source == FeedbackSource::kOracle ? "oracle" : "human"}};
  j["corrected_label"] = fb.corrected_label ? nlohmann::json(std::string(to_string(*fb.corrected_label)))
                                            : nlohmann::json(nullptr);
  j["corrected_mask"] = fb.corrected_mask ? mask_to_json(*fb.corrected_mask) : nlohmann::json(nullptr);
  return j;
}

inline Feedback feedback_from_json(const nlohmann::json& j) {
  Feedback fb;
  fb.prediction_correct = j.at("prediction_correct").get<bool>();
  fb.explanation_correct = j.at("explanation_correct").get<bool>();
  fb.source = j.at("source") == "human" ? FeedbackSource::kHuman : FeedbackSource::kOracle;
  if (!j.at("corrected_label").is_null()) fb.corrected_label = parse_label(j.at("corrected_label").get<std::string>());
  if (!j.at("corrected_mask").is_null()) fb.corrected_mask = mask_from_json(j.at("corrected_mask"));
  return fb;
}

inline nlohmann::json metrics_to_json(const IterationMetrics& m) {
  return {{"iteration", m.iteration}, {"acc", m.accuracy},          {"f1", m.f1},
          {"mcc", m.mcc},             {"T", m.training_size}, {"U", m.pool_size}};
}

inline IterationMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("iteration").get<int>(), j.at("acc").get<double>(),      j.at("f1").get<double>(),
          j.at("mcc").get<double>(),    j.at("T").get<std::size_t>(), j.at("U").get<std::size_t>()};
}

// Supplies feedback for a query; nullopt means "no feedback" (RandomAdd).
using FeedbackProvider = std::function<std::optional<Feedback>(const Query&)>;

class InteractiveLoop {
 public:
  // `initial` must already be trained; the loop takes a copy.
  InteractiveLoop(const Dataset& data, const DatasetSplits& splits, std::vector<Image> backgrounds,
                  RunConfig config, const ConvScorer& initial)
      : data_(&data), backgrounds_(std::move(backgrounds)), config_(std::move(config)), scorer_(initial),
        selection_rng_(derive_seed(config_.seed, 31)) {
    if (config_.interactions_per_iteration < 1) {
      throw std::invalid_argument("RunConfig: interactions_per_iteration must be >= 1");
    }
    if (config_.iteration_budget < 0) throw std::invalid_argument("RunConfig: iteration_budget < 0");
    if (!(config_.pool_holdout_fraction >= 0.0 && config_.pool_holdout_fraction < 1.0)) {
      throw std::invalid_argument("RunConfig: pool_holdout_fraction outside [0, 1)");
    }
    config_.train.validate();
    for (const auto& id : splits.train) training_.push_back({id, data.at(id).label, {}, nullptr});
    for (const auto& id : splits.validation) validation_.push_back(&data.at(id));
    for (const auto& id : splits.test) test_.push_back(&data.at(id));
    pool_ = splits.interactive;
    for (const auto& id : pool_) data.at(id);
    if (config_.pool_holdout_fraction > 0.0) {
      std::vector<std::string> shuffled = pool_;
      Rng rng(derive_seed(config_.seed, 32));
      rng.shuffle(shuffled);
      const auto n = static_cast<std::size_t>(config_.pool_holdout_fraction * static_cast<double>(pool_.size()));
      const std::set<std::string> held(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n));
      holdout_.assign(held.begin(), held.end());
      std::erase_if(pool_, [&](const std::string& id) { return held.count(id) != 0; });
    }
    initial_training_ = training_;
    record_metrics();
  }

  const RunConfig& config() const { return config_; }
  const ConvScorer& classifier() const { return scorer_; }
  std::uint64_t classifier_version() const { return classifier_version_; }
  const std::vector<TrainingEntry>& training_set() const { return training_; }
  const std::vector<std::string>& pool() const { return pool_; }
  const std::vector<std::string>& holdout() const { return holdout_; }
  const std::vector<IterationMetrics>& metrics() const { return metrics_; }
  const nlohmann::json& events() const { return events_; }
  int iteration() const { return iteration_; }
  int steps() const { return steps_; }
  int steps_in_iteration() const { return steps_in_iteration_; }
  bool retrain_due() const { return steps_in_iteration_ >= config_.interactions_per_iteration; }
  const std::optional<Query>& pending() const { return pending_; }
  const LabeledInstance& instance(const std::string& id) const { return data_->at(id); }
  bool in_pool(const std::string& id) const {
    return std::find(pool_.begin(), pool_.end(), id) != pool_.end();
  }

  StopReason stop_reason() const {
    if (!metrics_.empty() && config_.target_accuracy && metrics_.back().accuracy >= *config_.target_accuracy) {
      return StopReason::kTargetAccuracy;
    }
    if (iteration_ >= config_.iteration_budget) return StopReason::kBudget;
    if (pool_.empty()) return StopReason::kPoolExhausted;
    return StopReason::kNone;
  }
  bool finished() const { return stop_reason() != StopReason::kNone; }

  // NOK confidence and embedding under the current classifier.
  const Scored& scored(const std::string& id) {
    refresh_cache();
    auto it = scored_.find(id);
    if (it == scored_.end()) it = scored_.emplace(id, scorer_.score(data_->at(id).image)).first;
    return it->second;
  }

  // Saliency of `id` for its predicted class, cached per classifier version.
  const SaliencyMap& explanation(const std::string& id) {
    refresh_cache();
    auto it = explanations_.find(id);
    if (it == explanations_.end()) {
      const auto& inst = data_->at(id);
      const MaskSet& masks = mask_set(inst.image.side());
      it = explanations_
               .emplace(id, explain(config_.method, inst.image, scorer_, masks,
                                    predicted_label(scored(id).confidence)))
               .first;
    }
    return it->second;
  }

  // Codebook over the current pool (ground-truth labels).
  Codebook pool_codebook() {
    std::vector<CodebookEntry> entries;
    entries.reserve(pool_.size());
    for (const auto& id : pool_) entries.push_back({id, scored(id).embedding, data_->at(id).label});
    return Codebook(std::move(entries), classifier_version_);
  }

  std::optional<std::string> select_query() {
    if (pool_.empty()) return std::nullopt;
    if (config_.strategy == StrategyKind::kRandomAdd) return pool_[selection_rng_.below(pool_.size())];
    const std::string* best = nullptr;
    double best_certainty = 0.0;
    for (const auto& id : pool_) {
      const double f = scored(id).confidence;
      const double certainty = std::max(f, 1.0 - f);
      if (!best || certainty < best_certainty || (certainty == best_certainty && id < *best)) {
        best = &id;
        best_certainty = certainty;
      }
    }
    return *best;
  }

  // Selects the next instance and holds it until feedback arrives. Calling
  // again before feedback returns the same query.
  std::optional<Query> prepare_query() {
    if (pending_) return pending_;
    if (finished()) return std::nullopt;
    const auto id = select_query();
    if (!id) return std::nullopt;
    const double f = scored(*id).confidence;
    pending_ = Query{*id, f, predicted_label(f)};
    return pending_;
  }

  // Applies feedback to the pending query, moving instances from the pool
  // into the training set.
  const nlohmann::json& apply_feedback(const std::optional<Feedback>& feedback) {
    if (!pending_) throw StateError("no pending query");
    if (feedback) feedback->validate();
    const Query query = *pending_;
    const LabeledInstance& x = data_->at(query.id);
    const bool random_add = config_.strategy == StrategyKind::kRandomAdd;
    Label label_x = x.label;
    if (feedback && !random_add) {
      label_x = feedback->prediction_correct ? feedback->corrected_label.value_or(query.predicted)
                                             : *feedback->corrected_label;
    }
    Rng rng(derive_seed(config_.seed, 1000 + static_cast<std::uint64_t>(steps_)));
    nlohmann::json added = nlohmann::json::array();
    nlohmann::json removed = nlohmann::json::array();
    nlohmann::json neighbors = nlohmann::json::object();

    remove_from_pool(query.id);
    removed.push_back(query.id);

    std::vector<Refutation> c_x;
    if (uses_refutations(config_.strategy) && feedback) {
      c_x = refutations_for(query.id, label_x, *feedback, rng);
    }

    const bool wrong = feedback && !feedback->prediction_correct;
    if (uses_neighbors(config_.strategy) && config_.near_branch && wrong) {
      const Embedding query_embedding = scored(query.id).embedding;
      const Codebook codebook = pool_codebook();
      std::optional<std::string> hit_id, miss_id;
      try {
        hit_id = near_hit(codebook, query_embedding, label_x);
      } catch (const NotFound& e) {
        warn(std::string("near branch: ") + e.what());
      }
      try {
        miss_id = near_miss(codebook, query_embedding, label_x);
      } catch (const NotFound& e) {
        warn(std::string("near branch: ") + e.what());
      }
      neighbors["hit"] = hit_id ? nlohmann::json(*hit_id) : nlohmann::json(nullptr);
      neighbors["miss"] = miss_id ? nlohmann::json(*miss_id) : nlohmann::json(nullptr);
      nlohmann::json neighbor_feedback = nlohmann::json::object();
      for (const auto* nid : {hit_id ? &*hit_id : nullptr, miss_id ? &*miss_id : nullptr}) {
        if (!nid) continue;
        const LabeledInstance& n = data_->at(*nid);
        Label label_n = n.label;
        std::vector<Refutation> c_n;
        if (config_.strategy == StrategyKind::kNearCaipi) {
          const Feedback fb_n = oracle_feedback(n, scored(*nid).confidence);
          neighbor_feedback[*nid] = feedback_to_json(fb_n);
          label_n = *fb_n.corrected_label;
          c_n = refutations_for(*nid, label_n, fb_n, rng);
        }
        remove_from_pool(*nid);
        removed.push_back(*nid);
        add_instance(*nid, label_n, added);
        for (auto& r : c_n) add_refutation(std::move(r), added);
      }
      if (!neighbor_feedback.empty()) neighbors["feedback"] = std::move(neighbor_feedback);
    }

    add_instance(query.id, label_x, added);
    for (auto& r : c_x) add_refutation(std::move(r), added);

    nlohmann::json event = {{"type", "step"},
                            {"step", steps_},
                            {"iteration", iteration_},
                            {"query", query.id},
                            {"confidence", query.confidence},
                            {"predicted", std::string(to_string(query.predicted))},
                            {"feedback", feedback && !random_add ? feedback_to_json(*feedback) : nlohmann::json(nullptr)},
                            {"removed", removed},
                            {"added", added},
                            {"training_size", training_.size()},
                            {"pool_size", pool_.size()}};
    if (!neighbors.empty()) event["neighbors"] = neighbors;
    events_.push_back(std::move(event));
    ++steps_;
    ++steps_in_iteration_;
    pending_.reset();
    return events_.back();
  }

  // From-scratch retraining on T, then evaluation on the test split.
  const IterationMetrics& retrain() {
    if (pending_) throw StateError("cannot retrain while a query awaits feedback");
    ++iteration_;
    ConvScorer next(config_.scorer, derive_seed(config_.seed, 100 + static_cast<std::uint64_t>(iteration_)));
    std::vector<Sample> train_samples, val_samples;
    train_samples.reserve(training_.size());
    for (const auto& e : training_) {
      train_samples.push_back({e.image ? e.image.get() : &data_->at(e.id).image, e.label, nullptr});
    }
    for (const auto* v : validation_) val_samples.push_back({&v->image, v->label, nullptr});
    TrainConfig tc = config_.train;
    tc.seed = derive_seed(config_.seed, 200 + static_cast<std::uint64_t>(iteration_));
    const TrainLog log = train(next, train_samples, val_samples, tc);
    scorer_ = std::move(next);
    ++classifier_version_;
    record_metrics();
    events_.push_back({{"type", "retrain"},
                       {"iteration", iteration_},
                       {"steps", steps_},
                       {"epochs", log.epochs.size()},
                       {"best_epoch", log.best_epoch},
                       {"metrics", metrics_to_json(metrics_.back())}});
    steps_in_iteration_ = 0;
    return metrics_.back();
  }

  // Drives the loop to a stop condition. Retraining happens after every N
  // completed steps; a partial last iteration is not retrained.
  StopReason run(const FeedbackProvider& provider) {
    while (!finished()) {
      const auto query = prepare_query();
      if (!query) break;
      apply_feedback(provider(*query));
      if (retrain_due()) retrain();
    }
    return stop_reason();
  }

  // The oracle provider for this loop (nullopt for RandomAdd).
  FeedbackProvider oracle() {
    return [this](const Query& q) -> std::optional<Feedback> {
      if (config_.strategy == StrategyKind::kRandomAdd) return std::nullopt;
      return oracle_feedback(data_->at(q.id), q.confidence);
    };
  }

  const std::vector<TrainingEntry>& initial_training_set() const { return initial_training_; }

 private:
  void refresh_cache() {
    if (cache_version_ == classifier_version_) return;
    scored_.clear();
    explanations_.clear();
    cache_version_ = classifier_version_;
  }

  const MaskSet& mask_set(int side) {
    auto it = mask_sets_.find(side);
    if (it == mask_sets_.end()) {
      MaskSetConfig mc = config_.masks;
      mc.side = side;
      it = mask_sets_.emplace(side, MaskSet::sample(mc)).first;
    }
    return it->second;
  }

  std::vector<Refutation> refutations_for(const std::string& id, Label label, const Feedback& fb, Rng& rng) {
    if (config_.refutation_count == 0) return {};
    const LabeledInstance& inst = data_->at(id);
    std::optional<BinaryMask> region;
    if (label == Label::kNok) {
      if (!fb.explanation_correct && fb.corrected_mask) {
        region = fb.corrected_mask;
      } else {
        // Accepted explanation, or a NOK correction without a mask: use the
        // explanation's most salient pixels.
        region = binarize_topfraction(explanation(id), config_.explanation_fraction);
      }
    }
    return generate_refutations(id, inst.image, region, label, backgrounds_, config_.refutation_count, rng);
  }

  void remove_from_pool(const std::string& id) {
    const auto it = std::find(pool_.begin(), pool_.end(), id);
    if (it == pool_.end()) throw StateError("instance " + id + " is not in the pool");
    pool_.erase(it);
  }

  void add_instance(const std::string& id, Label label, nlohmann::json& added) {
    training_.push_back({id, label, {}, nullptr});
    added.push_back({{"id", id}, {"label", std::string(to_string(label))}});
  }

  void add_refutation(Refutation r, nlohmann::json& added) {
    const std::string id = r.source_id + "~" + std::to_string(refutation_counter_++);
    added.push_back({{"id", id}, {"label", std::string(to_string(r.label))}, {"provenance", r.source_id + ":" + r.transform}});
    training_.push_back({id, r.label, r.source_id + ":" + r.transform, std::make_shared<const Image>(std::move(r.image))});
  }

  void record_metrics() {
    ConfusionMatrix cm;
    for (const auto* t : test_) cm.add(t->label, predicted_label(scorer_.predict(t->image)));
    IterationMetrics m;
    m.iteration = iteration_;
    m.training_size = training_.size();
    m.pool_size = pool_.size();
    if (cm.total() > 0) {
      const auto cls = classification_metrics(cm);
      m.accuracy = cls.accuracy;
      m.f1 = cls.f1;
      m.mcc = cls.mcc;
    }
    metrics_.push_back(m);
  }

  const Dataset* data_;
  std::vector<Image> backgrounds_;
  RunConfig config_;
  ConvScorer scorer_;
  Rng selection_rng_;
  std::vector<TrainingEntry> training_;
  std::vector<TrainingEntry> initial_training_;
  std::vector<const LabeledInstance*> validation_;
  std::vector<const LabeledInstance*> test_;
  std::vector<std::string> pool_;
  std::vector<std::string> holdout_;
  std::vector<IterationMetrics> metrics_;
  nlohmann::json events_ = nlohmann::json::array();
  std::optional<Query> pending_;
  int iteration_ = 0;
  int steps_ = 0;
  int steps_in_iteration_ = 0;
  std::size_t refutation_counter_ = 0;
  std::uint64_t classifier_version_ = 1;  // bumped by every retraining
  std::uint64_t cache_version_ = 0;
  std::map<std::string, Scored> scored_;
  std::map<std::string, SaliencyMap> explanations_;
  std::map<int, MaskSet> mask_sets_;
};

// Rebuilds T (ids and labels) from the initial training set and a step log,
// optionally leaving one step out. Leaving out step k yields the training
// set as it would be had that interaction never happened.
inline std::vector<std::pair<std::string, Label>> reconstruct_training_set(
    std::span<const TrainingEntry> initial, const nlohmann::json& events,
    std::optional<int> skip_step = std::nullopt) {
  std::vector<std::pair<std::string, Label>> out;
  for (const auto& e : initial) out.emplace_back(e.id, e.label);
  for (const auto& ev : events) {
    if (ev.at("type") != "step") continue;
    if (skip_step && ev.at("step").get<int>() == *skip_step) continue;
    for (const auto& a : ev.at("added")) {
      out.emplace_back(a.at("id").get<std::string>(), parse_label(a.at("label").get<std::string>()));
    }
  }
  return out;
}

}  // namespace invrise

#endif  // INVRISE_INTERACTION_HPP_
