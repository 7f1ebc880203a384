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

#include "invrise/service.hpp"

#include <gtest/gtest.h>

#include <thread>

namespace invrise {
namespace {

ExperimentConfig session_config() {
  ExperimentConfig c;
  c.dataset.ok = 24;
  c.dataset.no_seam = 6;
  c.dataset.nok = 18;
  c.dataset.side = 16;
  c.backgrounds = 2;
  c.scorer = ScorerConfig{16, 1, 2, 4, 4, true};
  c.train.max_epochs = 3;
  c.masks.k = 40;
  c.masks.l = 4;
  c.masks.side = 16;
  c.interactions_per_iteration = 2;
  c.iteration_budget = 3;
  c.refutation_count = 3;
  return c;
}

// Serves one session on an ephemeral port for the lifetime of the fixture.
class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<StudioService>(session_config(), StrategyKind::kCaipi, 0);
    service_->bind(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  std::pair<int, nlohmann::json> get(const std::string& path) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    return {res->status, nlohmann::json::parse(res->body)};
  }
  std::pair<int, nlohmann::json> post(const std::string& path, const std::string& body = "{}") {
    auto res = client_->Post(path, body, "application/json");
    EXPECT_TRUE(res) << path;
    return {res->status, nlohmann::json::parse(res->body)};
  }

  std::unique_ptr<StudioService> service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, PaintedMaskSessionEndToEnd) {
  auto [code, status] = get("/session/status");
  ASSERT_EQ(code, 200);
  const std::size_t t0 = status.at("T");
  auto [mcode, metrics] = get("/run/metrics");
  ASSERT_EQ(mcode, 200);
  ASSERT_EQ(metrics.at("iterations").size(), 1u);

  auto [ncode, query] = get("/session/next");
  ASSERT_EQ(ncode, 200);
  ASSERT_FALSE(query.at("done").get<bool>());
  const std::string id = query.at("id");
  const Image image = decode_png(base64_decode(query.at("image").get<std::string>()));
  EXPECT_EQ(image.side(), 16);
  EXPECT_EQ(decode_png(base64_decode(query.at("overlay").get<std::string>())).channels(), 3);
  EXPECT_TRUE(query.contains("near_hit"));

  // A painted correction: ten pixels of one row.
  BinaryMask painted(16);
  std::vector<std::size_t> expected;
  for (int c = 3; c < 13; ++c) {
    painted.at(7, c) = 1;
    expected.push_back(7 * 16 + static_cast<std::size_t>(c));
  }
  ASSERT_EQ(count_ones(painted), 10u);
  const bool predicted_nok = query.at("predicted") == "NOK";
  nlohmann::json fb = {{"id", id},
                       {"prediction_correct", predicted_nok},
                       {"explanation_correct", false},
                       {"corrected_label", "NOK"},
                       {"corrected_mask", base64_encode(encode_mask_png(painted))}};
  auto [fcode, reply] = post("/session/feedback", fb.dump());
  ASSERT_EQ(fcode, 200) << reply.dump();
  const auto& event = reply.at("event");
  EXPECT_EQ(event.at("feedback").at("source"), "human");
  EXPECT_EQ(event.at("feedback").at("corrected_mask").at("pixels").get<std::vector<std::size_t>>(), expected);
  EXPECT_EQ(event.at("added").size(), 1u + 3u);

  std::tie(code, status) = get("/session/status");
  EXPECT_EQ(status.at("T").get<std::size_t>(), t0 + 1 + 3);
  EXPECT_TRUE(status.at("pending").is_null());

  // Finish the iteration, then retrain and look for the new chart point.
  std::tie(ncode, query) = get("/session/next");
  ASSERT_EQ(ncode, 200);
  fb = {{"prediction_correct", true}, {"explanation_correct", true}};
  std::tie(fcode, reply) = post("/session/feedback", fb.dump());
  ASSERT_EQ(fcode, 200) << reply.dump();
  EXPECT_TRUE(reply.at("retrain_due").get<bool>());
  EXPECT_EQ(get("/session/next").first, 409);

  auto [rcode, point] = post("/session/retrain");
  ASSERT_EQ(rcode, 200) << point.dump();
  EXPECT_EQ(point.at("iteration"), 1);
  std::tie(mcode, metrics) = get("/run/metrics");
  ASSERT_EQ(metrics.at("iterations").size(), 2u);
  EXPECT_EQ(metrics.at("iterations").back(), point);
}

TEST_F(ServiceTest, ErrorStatuses) {
  EXPECT_EQ(get("/instance/no-such-id").first, 404);
  EXPECT_EQ(post("/session/feedback", R"({"prediction_correct":true,"explanation_correct":true})").first, 409);

  auto [ncode, query] = get("/session/next");
  ASSERT_EQ(ncode, 200);
  const std::string id = query.at("id");
  EXPECT_EQ(post("/session/retrain").first, 409);
  EXPECT_EQ(post("/session/feedback", R"({"id":"other","prediction_correct":true,"explanation_correct":true})").first,
            409);
  EXPECT_EQ(post("/session/feedback", "not json").first, 400);
  EXPECT_EQ(post("/session/feedback", R"({"prediction_correct":false,"explanation_correct":true})").first, 400);
  BinaryMask wrong(8);
  wrong.at(0, 0) = 1;
  const nlohmann::json bad = {{"prediction_correct", true},
                              {"explanation_correct", false},
                              {"corrected_mask", base64_encode(encode_mask_png(wrong))}};
  EXPECT_EQ(post("/session/feedback", bad.dump()).first, 400);

  auto [icode, inst] = get("/instance/" + id);
  ASSERT_EQ(icode, 200);
  EXPECT_EQ(inst.at("id"), id);
  EXPECT_TRUE(inst.at("in_pool").get<bool>());
  // The failed attempts left the session untouched.
  EXPECT_EQ(get("/session/status").second.at("pending"), id);
}

TEST_F(ServiceTest, RunsToTheBudget) {
  for (int guard = 0; guard < 20; ++guard) {
    auto [code, query] = get("/session/next");
    if (code == 409) {
      ASSERT_EQ(post("/session/retrain").first, 200);
      continue;
    }
    ASSERT_EQ(code, 200);
    if (query.at("done").get<bool>()) {
      EXPECT_EQ(query.at("stop_reason"), "budget");
      EXPECT_EQ(get("/run/metrics").second.at("iterations").size(), 4u);
      return;
    }
    const nlohmann::json fb = {{"prediction_correct", true}, {"explanation_correct", true}};
    ASSERT_EQ(post("/session/feedback", fb.dump()).first, 200);
  }
  FAIL() << "session did not finish";
}

}  // namespace
}  // namespace invrise
