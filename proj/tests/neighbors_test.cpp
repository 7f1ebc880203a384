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

#include "invrise/neighbors.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace invrise {
namespace {

using testing::FunctionClassifier;

TEST(Cosine, FrozenValues) {
  const std::vector<double> a{1, 0}, b{1, 1}, c{-2, 0};
  EXPECT_NEAR(cosine(a, b), 0.70710678, 1e-8);
  EXPECT_DOUBLE_EQ(cosine(a, c), -1.0);
  EXPECT_DOUBLE_EQ(cosine(b, b), 1.0);
  WarningCapture capture;
  EXPECT_EQ(cosine(a, std::vector<double>{0, 0}), 0.0);
  EXPECT_TRUE(capture.contains("degenerate"));
  EXPECT_THROW(cosine(a, std::vector<double>{1}), std::invalid_argument);
}

TEST(Cosine, InvariantToPositiveRescaling) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(8), b(8);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const double s = rng.uniform(0.01, 100.0);
    auto b2 = b;
    for (auto& v : b2) v *= s;
    EXPECT_NEAR(cosine(a, b), cosine(a, b2), 1e-12);
    EXPECT_NEAR(cosine(a, b), cosine(b, a), 1e-15);
  }
}

Codebook random_codebook(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CodebookEntry> entries;
  for (int i = 0; i < n; ++i) {
    Embedding e(6);
    for (auto& v : e) v = rng.uniform(-1, 1);
    char id[16];
    std::snprintf(id, sizeof(id), "e%03d", i);
    entries.push_back({id, e, rng.bernoulli(0.5) ? Label::kNok : Label::kOk});
  }
  return Codebook(std::move(entries), 3);
}

// Linear scan written independently of the library's loop.
std::string scan(const Codebook& cb, const Embedding& q, const std::string& self, Label wanted, bool nearest) {
  std::vector<std::pair<double, std::string>> cands;
  for (const auto& e : cb.entries()) {
    if (e.label != wanted || e.id == self) continue;
    double dot = 0, nq = 0, ne = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      dot += q[i] * e.embedding[i];
      nq += q[i] * q[i];
      ne += e.embedding[i] * e.embedding[i];
    }
    const double sim = dot / std::sqrt(nq * ne);
    cands.push_back({nearest ? -sim : sim, e.id});
  }
  return std::min_element(cands.begin(), cands.end())->second;
}

TEST(Neighbors, MatchLinearScanOracle) {
  const Codebook cb = random_codebook(40, 9);
  for (const auto& e : cb.entries()) {
    EXPECT_EQ(near_hit(cb, e.id, e.label), scan(cb, e.embedding, e.id, e.label, true));
    EXPECT_EQ(near_miss(cb, e.id, e.label), scan(cb, e.embedding, e.id, other(e.label), true));
    EXPECT_EQ(furthest_hit(cb, e.id, e.label), scan(cb, e.embedding, e.id, e.label, false));
  }
  const Embedding raw{0.3, -0.1, 0.9, 0.0, 0.2, -0.5};
  EXPECT_EQ(near_hit(cb, raw, Label::kNok), scan(cb, raw, "", Label::kNok, true));
  EXPECT_EQ(furthest_hit(cb, raw, Label::kOk), scan(cb, raw, "", Label::kOk, false));
}

TEST(Neighbors, SelfIsExcludedButDuplicatesAreNot) {
  Codebook cb({{"a", {1, 0}, Label::kOk}, {"b", {1, 0}, Label::kOk}, {"c", {0, 1}, Label::kOk}}, 0);
  EXPECT_EQ(near_hit(cb, std::string("a"), Label::kOk), "b");
  EXPECT_EQ(near_hit(cb, std::string("b"), Label::kOk), "a");
  EXPECT_EQ(furthest_hit(cb, std::string("a"), Label::kOk), "c");
  // Raw embedding queries do not exclude anything; ties go to the smaller id.
  EXPECT_EQ(near_hit(cb, Embedding{2, 0}, Label::kOk), "a");
}

TEST(Neighbors, RescalingQueryDoesNotChangeAnswer) {
  const Codebook cb = random_codebook(30, 2);
  const Embedding q{0.5, 0.1, -0.3, 0.7, 0.0, 0.2};
  Embedding q2 = q;
  for (auto& v : q2) v *= 37.0;
  EXPECT_EQ(near_hit(cb, q, Label::kOk), near_hit(cb, q2, Label::kOk));
  EXPECT_EQ(near_miss(cb, q, Label::kOk), near_miss(cb, q2, Label::kOk));
}

TEST(Neighbors, MissingCandidatesAndIds) {
  Codebook cb({{"a", {1, 0}, Label::kOk}, {"b", {0, 1}, Label::kNok}}, 0);
  EXPECT_THROW(near_hit(cb, std::string("a"), Label::kOk), NotFound);  // only itself
  EXPECT_EQ(near_miss(cb, std::string("a"), Label::kOk), "b");
  EXPECT_THROW(near_hit(cb, std::string("zzz"), Label::kOk), NotFound);
  EXPECT_THROW(near_hit(Codebook{}, Embedding{1, 0}, Label::kOk), NotFound);
}

TEST(Codebook, ValidationAndVersion) {
  EXPECT_THROW(Codebook({{"a", {1}, Label::kOk}, {"a", {1}, Label::kOk}}, 0), std::invalid_argument);
  EXPECT_THROW(Codebook({{"a", {1}, Label::kOk}, {"b", {1, 2}, Label::kOk}}, 0), std::invalid_argument);
  const Codebook cb({{"a", {1}, Label::kOk}}, 5);
  EXPECT_NO_THROW(cb.require_version(5));
  EXPECT_THROW(cb.require_version(6), StateError);
}

TEST(Codebook, BuiltFromClassifierEmbeddings) {
  std::vector<LabeledInstance> pool(3);
  for (int i = 0; i < 3; ++i) {
    pool[i].id = "p" + std::to_string(i);
    pool[i].image = Image(2, 1, 0.1 * (i + 1));
    pool[i].label = i == 1 ? Label::kNok : Label::kOk;
  }
  std::vector<const LabeledInstance*> ptrs{&pool[0], &pool[1], &pool[2]};
  const FunctionClassifier clf([](const Image& x) { return x.pixels()[0]; });
  const Codebook cb = build_codebook(ptrs, clf, 2);
  EXPECT_EQ(cb.size(), 3u);
  EXPECT_EQ(cb.classifier_version(), 2u);
  EXPECT_DOUBLE_EQ(cb.at("p2").embedding[0], 0.3);
  EXPECT_EQ(cb.at("p1").label, Label::kNok);
}

}  // namespace
}  // namespace invrise
