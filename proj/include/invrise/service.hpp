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

// HTTP front end for one live interactive session.
//
//   GET  /session/next       pending query with image, overlay and neighbors
//   GET  /instance/{id}      image and metadata
//   POST /session/feedback   feedback for the pending query
//   POST /session/retrain    retrain on T and record metrics
//   GET  /session/status     counters and latest metrics
//   GET  /run/metrics        run record so far
//
// Mutating requests that arrive while another one is being processed are
// rejected with 409. Status and metrics read a snapshot and never wait.

#ifndef INVRISE_SERVICE_HPP_
#define INVRISE_SERVICE_HPP_

#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "httplib.h"
#include "invrise/harness.hpp"
#include "invrise/interaction.hpp"
#include "invrise/neighbors.hpp"
#include "invrise/png_io.hpp"
#include "json.hpp"

namespace invrise {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class StudioService {
 public:
  StudioService(ExperimentConfig config, StrategyKind strategy, std::uint64_t seed)
      : config_(std::move(config)), strategy_(strategy), seed_(seed), data_(load_experiment_data(config_)) {
    const DatasetSplits splits = experiment_splits(config_, data_, seed_);
    const ConvScorer initial = initial_classifier(config_, data_, splits, seed_);
    loop_ = std::make_unique<InteractiveLoop>(data_.dataset, splits, data_.backgrounds,
                                              run_config(config_, strategy_, seed_), initial);
    publish();
  }

  // Starts a session on an already trained classifier.
  StudioService(ExperimentConfig config, StrategyKind strategy, std::uint64_t seed, const ConvScorer& initial)
      : config_(std::move(config)), strategy_(strategy), seed_(seed), data_(load_experiment_data(config_)) {
    const DatasetSplits splits = experiment_splits(config_, data_, seed_);
    loop_ = std::make_unique<InteractiveLoop>(data_.dataset, splits, data_.backgrounds,
                                              run_config(config_, strategy_, seed_), initial);
    publish();
  }

  const InteractiveLoop& loop() const { return *loop_; }

  ServiceResponse next() {
    return mutate([&]() -> ServiceResponse {
      if (loop_->retrain_due()) return error(409, "retrain due");
      const auto query = loop_->prepare_query();
      if (!query) {
        return {200, {{"done", true}, {"stop_reason", std::string(to_string(loop_->stop_reason()))}}};
      }
      const LabeledInstance& x = loop_->instance(query->id);
      const SaliencyMap& map = loop_->explanation(query->id);
      nlohmann::json body = {{"done", false},
                             {"id", query->id},
                             {"image", base64_encode(encode_png(x.image))},
                             {"predicted", std::string(to_string(query->predicted))},
                             {"confidence", query->confidence},
                             {"overlay", base64_encode(encode_png(saliency_overlay(x.image, map)))}};
      const Codebook codebook = loop_->pool_codebook();
      auto lookup = [&](const char* key, auto&& fn) {
        try {
          body[key] = fn(codebook, NeighborQuery{query->id}, query->predicted);
        } catch (const NotFound&) {
          body[key] = nullptr;
        }
      };
      lookup("near_hit", [](const Codebook& c, const NeighborQuery& q, Label l) { return near_hit(c, q, l); });
      lookup("near_miss", [](const Codebook& c, const NeighborQuery& q, Label l) { return near_miss(c, q, l); });
      lookup("furthest_hit",
             [](const Codebook& c, const NeighborQuery& q, Label l) { return furthest_hit(c, q, l); });
      return {200, std::move(body)};
    });
  }

  ServiceResponse instance(const std::string& id) const {
    try {
      const LabeledInstance& x = data_.dataset.at(id);
      nlohmann::json body = {{"id", x.id},
                             {"image", base64_encode(encode_png(x.image))},
                             {"side", x.image.side()},
                             {"channels", x.image.channels()},
                             {"label", std::string(to_string(x.label))},
                             {"has_mask", x.defect_mask.has_value()},
                             {"in_pool", loop_->in_pool(id)}};
      body["defect_kind"] = x.defect_kind ? nlohmann::json(std::string(to_string(*x.defect_kind))) : nullptr;
      return {200, std::move(body)};
    } catch (const NotFound& e) {
      return error(404, e.what());
    }
  }

  // Body: {prediction_correct, explanation_correct, corrected_label?,
  // corrected_mask? (base64 PNG), id?}. A given id must name the pending query.
  ServiceResponse feedback(const std::string& text) {
    return mutate([&]() -> ServiceResponse {
      const auto& pending = loop_->pending();
      if (!pending) return error(409, "no pending query");
      Feedback fb;
      try {
        const auto j = nlohmann::json::parse(text);
        if (j.contains("id") && j.at("id").get<std::string>() != pending->id) {
          return error(409, "feedback for " + j.at("id").get<std::string>() + " but pending query is " + pending->id);
        }
        fb.prediction_correct = j.at("prediction_correct").get<bool>();
        fb.explanation_correct = j.at("explanation_correct").get<bool>();
        if (j.contains("corrected_label") && !j.at("corrected_label").is_null()) {
          fb.corrected_label = parse_label(j.at("corrected_label").get<std::string>());
        }
        if (j.contains("corrected_mask") && !j.at("corrected_mask").is_null()) {
          fb.corrected_mask = decode_mask_png(base64_decode(j.at("corrected_mask").get<std::string>()));
          if (fb.corrected_mask->side() != loop_->instance(pending->id).image.side()) {
            return error(400, "corrected mask size does not match the image");
          }
        }
        fb.source = FeedbackSource::kHuman;
        fb.validate();
      } catch (const std::exception& e) {
        return error(400, e.what());
      }
      const nlohmann::json event = loop_->apply_feedback(fb);
      return {200, {{"event", event}, {"retrain_due", loop_->retrain_due()}}};
    });
  }

  ServiceResponse retrain() {
    return mutate([&]() -> ServiceResponse {
      if (loop_->pending()) return error(409, "a query awaits feedback");
      return {200, metrics_to_json(loop_->retrain())};
    });
  }

  ServiceResponse status() const {
    std::lock_guard lock(snapshot_mutex_);
    return {200, status_};
  }

  ServiceResponse metrics() const {
    std::lock_guard lock(snapshot_mutex_);
    return {200, metrics_};
  }

  void bind(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Get("/session/next", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, next()); });
    server.Get(R"(/instance/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, instance(req.matches[1]));
    });
    server.Post("/session/feedback", [this, reply](const httplib::Request& req, httplib::Response& res) {
      reply(res, feedback(req.body));
    });
    server.Post("/session/retrain",
                [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, retrain()); });
    server.Get("/session/status", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, status()); });
    server.Get("/run/metrics", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, metrics()); });
  }

 private:
  static ServiceResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

  template <typename Fn>
  ServiceResponse mutate(Fn&& fn) {
    std::unique_lock lock(loop_mutex_, std::try_to_lock);
    if (!lock.owns_lock()) return error(409, "session busy");
    ServiceResponse r;
    try {
      r = fn();
    } catch (const StateError& e) {
      r = error(409, e.what());
    } catch (const std::exception& e) {
      r = error(500, e.what());
    }
    publish();
    return r;
  }

  void publish() {
    nlohmann::json status = {{"strategy", std::string(to_string(strategy_))},
                             {"seed", seed_},
                             {"iteration", loop_->iteration()},
                             {"steps", loop_->steps()},
                             {"T", loop_->training_set().size()},
                             {"U", loop_->pool().size()},
                             {"retrain_due", loop_->retrain_due()},
                             {"stop_reason", std::string(to_string(loop_->stop_reason()))}};
    status["pending"] = loop_->pending() ? nlohmann::json(loop_->pending()->id) : nullptr;
    status["latest"] = metrics_to_json(loop_->metrics().back());
    nlohmann::json iterations = nlohmann::json::array();
    for (const auto& m : loop_->metrics()) iterations.push_back(metrics_to_json(m));
    nlohmann::json metrics = {{"strategy", std::string(to_string(strategy_))},
                              {"seed", seed_},
                              {"config_digest", config_digest(config_)},
                              {"iterations", std::move(iterations)}};
    std::lock_guard lock(snapshot_mutex_);
    status_ = std::move(status);
    metrics_ = std::move(metrics);
  }

  ExperimentConfig config_;
  StrategyKind strategy_;
  std::uint64_t seed_;
  ExperimentData data_;
  std::unique_ptr<InteractiveLoop> loop_;
  std::mutex loop_mutex_;
  mutable std::mutex snapshot_mutex_;
  nlohmann::json status_;
  nlohmann::json metrics_;
};

}  // namespace invrise

#endif  // INVRISE_SERVICE_HPP_
