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

#include "invrise/bridge.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "invrise/saliency.hpp"
#include "test_util.hpp"

namespace invrise {
namespace {

using namespace std::chrono_literals;
using testing::random_image;
using testing::TempDir;

BridgeClassifier fake(const std::string& mode, BridgeOptions options = {}) {
  return BridgeClassifier({FAKE_BRIDGE_PATH, mode}, options);
}

double mean(const Image& img) {
  double s = 0.0;
  for (double v : img.pixels()) s += v;
  return s / img.pixels().size();
}

TEST(Bridge, HandshakeAndRequests) {
  auto b = fake("ok");
  EXPECT_EQ(b.embedding_size(), 2u);
  const Image img = random_image(8, 1, 3);
  // 16-bit transport: each pixel is off by at most half a step.
  EXPECT_NEAR(b.predict(img), mean(img), 0.5 / 65535.0);
  const auto e = b.embed(img);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[1], 1.0);
}

TEST(Bridge, OutOfOrderResponsesAreMatchedById) {
  auto b = fake("swap", {5s, 4});
  std::vector<Image> imgs;
  for (int i = 0; i < 10; ++i) imgs.push_back(Image(4, 1, 0.05 * (i + 1)));
  const auto out = b.predict_batch(imgs);
  ASSERT_EQ(out.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(out[i], 0.05 * (i + 1), 0.5 / 65535.0 + 1e-12) << i;
}

TEST(Bridge, HangTimesOut) {
  auto b = fake("hang", {300ms, 16});
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(b.predict(Image(4, 1, 0.5)), BridgeTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 5s);
}

TEST(Bridge, DeadProcessIsABridgeError) {
  auto b = fake("die", {5s, 16});
  try {
    b.predict(Image(4, 1, 0.5));
    FAIL();
  } catch (const BridgeError& e) {
    EXPECT_NE(std::string(e.what()).find("closed"), std::string::npos) << e.what();
  }
}

TEST(Bridge, MalformedResponseQuotesPayload) {
  auto b = fake("malformed");
  try {
    b.predict(Image(4, 1, 0.5));
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find("this is not json"), std::string::npos);
  }
}

TEST(Bridge, ErrorObjectsAndRangeChecks) {
  auto b = fake("error");
  try {
    b.predict(Image(4, 1, 0.5));
    FAIL();
  } catch (const BridgeError& e) {
    EXPECT_NE(std::string(e.what()).find("model exploded"), std::string::npos);
  }
  auto r = fake("range");
  EXPECT_THROW(r.predict(Image(4, 1, 0.5)), ProtocolError);
}

TEST(Bridge, BadHandshakeAndMissingProgram) {
  EXPECT_THROW(fake("badhello"), ProtocolError);
  EXPECT_THROW(BridgeClassifier({"/nonexistent/classifier"}, {2s, 16}), BridgeError);
  EXPECT_THROW(BridgeClassifier({}), std::invalid_argument);
}

TEST(Bridge, SaliencyErrorCarriesProgress) {
  auto b = fake("die", {5s, 16});
  const MaskSet masks = sample_masks(20, 2, 0.5, 8, 0);
  try {
    invrise_saliency(random_image(8, 1, 0), b, masks, Label::kNok);
    FAIL();
  } catch (const SaliencyError& e) {
    EXPECT_EQ(e.completed_evaluations(), 0u);
  }
}

TEST(ServeBridge, AnswersRequestsAndErrors) {
  const testing::FunctionClassifier clf([](const Image& x) { return x.pixels()[0]; });
  const Image img(2, 1, 0.25);
  std::stringstream in, out;
  in << nlohmann::json{{"id", 4}, {"op", "predict"}, {"png", base64_encode(encode_png(img, PngDepth::k16))}}.dump() << '\n';
  in << nlohmann::json{{"id", 5}, {"op", "embed"}, {"png", base64_encode(encode_png(img, PngDepth::k16))}}.dump() << '\n';
  in << nlohmann::json{{"id", 6}, {"op", "paint"}, {"png", base64_encode(encode_png(img))}}.dump() << '\n';
  in << "garbage\n";
  serve_bridge(clf, in, out);
  std::vector<nlohmann::json> lines;
  std::string line;
  while (std::getline(out, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0].at("hello"), "invrise-bridge");
  EXPECT_EQ(lines[0].at("embedding_len"), 2);
  EXPECT_EQ(lines[1].at("id"), 4);
  EXPECT_NEAR(lines[1].at("confidence").get<double>(), 0.25, 1e-5);
  EXPECT_EQ(lines[2].at("embedding").size(), 2u);
  EXPECT_TRUE(lines[3].contains("error"));
  EXPECT_TRUE(lines[4].at("id").is_null());
  EXPECT_TRUE(lines[4].contains("error"));
}

TEST(Bridge, BuiltInScorerThroughCliIsTransparent) {
  TempDir dir;
  ConvScorer s(ScorerConfig{16, 1, 4, 8, 8, true}, 5);
  std::vector<double> p(s.parameters().begin(), s.parameters().end());
  Rng rng(1);
  for (auto& v : p) v += rng.uniform(-0.3, 0.3);
  s.set_parameters(p);
  s.save(dir / "m.ckpt");
  BridgeClassifier b({INVRISE_CLI_PATH, "bridge", "--model", (dir / "m.ckpt").string()});
  EXPECT_EQ(b.embedding_size(), 8u);
  std::vector<Image> imgs;
  for (std::uint64_t i = 0; i < 20; ++i) imgs.push_back(random_image(16, 1, i));
  const auto batch = b.predict_batch(imgs);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    EXPECT_NEAR(batch[i], s.predict(imgs[i]), 1e-6);
    const auto e = b.embed(imgs[i]);
    const auto local = s.embed(imgs[i]);
    for (std::size_t j = 0; j < e.size(); ++j) EXPECT_NEAR(e[j], local[j], 1e-5);
  }
  const MaskSet masks = sample_masks(64, 4, 0.5, 16, 2);
  const auto a = invrise_saliency(imgs[0], s, masks, Label::kNok);
  const auto c = invrise_saliency(imgs[0], b, masks, Label::kNok);
  for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(a.values[j], c.values[j], 1e-6);
}

}  // namespace
}  // namespace invrise
