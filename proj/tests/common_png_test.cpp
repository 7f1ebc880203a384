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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "invrise/common.hpp"
#include "invrise/png_io.hpp"
#include "test_util.hpp"

namespace invrise {
namespace {

using testing::random_image;
using testing::TempDir;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformIntCoversRangeInclusive) {
  Rng rng(1);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    const int v = rng.uniform_int(-2, 3);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 3);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_THROW(rng.below(0), std::invalid_argument);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(8);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(DeriveSeed, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t base = 0; base < 10; ++base) {
    for (std::uint64_t s = 0; s < 100; ++s) seen.insert(derive_seed(base, s));
  }
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(3, 4), derive_seed(3, 4));
}

TEST(Labels, RoundTripAndOther) {
  EXPECT_EQ(parse_label(to_string(Label::kOk)), Label::kOk);
  EXPECT_EQ(parse_label(to_string(Label::kNok)), Label::kNok);
  EXPECT_EQ(other(Label::kOk), Label::kNok);
  EXPECT_THROW(parse_label("maybe"), std::invalid_argument);
}

TEST(Warnings, CaptureCollectsAndRestores) {
  {
    WarningCapture capture;
    warn("first oddity");
    EXPECT_TRUE(capture.contains("oddity"));
    EXPECT_EQ(capture.messages().size(), 1u);
  }
  WarningCapture outer;
  warn("later");
  EXPECT_EQ(outer.messages().size(), 1u);
}

TEST(Png, EightBitRoundTripIsExactOnMultiplesOf255) {
  for (int channels : {1, 3}) {
    Image img(5, channels);
    Rng rng(channels);
    for (double& v : img.pixels()) v = static_cast<double>(rng.below(256)) / 255.0;
    EXPECT_EQ(decode_png(encode_png(img)), img);
  }
}

TEST(Png, SixteenBitRoundTripPrecision) {
  const Image img = random_image(16, 1, 5);
  const Image back = decode_png(encode_png(img, PngDepth::k16));
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    EXPECT_LE(std::abs(back.pixels()[i] - img.pixels()[i]), 0.5 / 65535.0 + 1e-15);
  }
}

TEST(Png, FileRoundTripAndMask) {
  TempDir dir;
  Image img(4, 1, 0.0);
  img.at(1, 2) = 1.0;
  save_png(dir / "a.png", img);
  EXPECT_EQ(load_png(dir / "a.png"), img);
  BinaryMask m(4);
  m.at(3, 0) = 1;
  save_mask_png(dir / "m.png", m);
  EXPECT_EQ(load_mask_png(dir / "m.png"), m);
}

TEST(Png, CorruptFileNamesPath) {
  TempDir dir;
  std::ofstream(dir / "bad.png") << "not a png";
  try {
    load_png(dir / "bad.png");
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
  EXPECT_THROW(load_png(dir / "missing.png"), LoadError);
}

TEST(Base64, KnownVectorsAndRoundTrip) {
  auto bytes = [](std::string_view s) { return std::vector<std::uint8_t>(s.begin(), s.end()); };
  EXPECT_EQ(base64_encode(bytes("")), "");
  EXPECT_EQ(base64_encode(bytes("f")), "Zg==");
  EXPECT_EQ(base64_encode(bytes("foob")), "Zm9vYg==");
  EXPECT_EQ(base64_encode(bytes("foobar")), "Zm9vYmFy");
  EXPECT_EQ(base64_decode("Zm9vYmE="), bytes("fooba"));
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  EXPECT_EQ(base64_decode(base64_encode(all)), all);
  EXPECT_THROW(base64_decode("Zm9v!!"), std::invalid_argument);
}

}  // namespace
}  // namespace invrise
