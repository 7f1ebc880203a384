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

#include "invrise/saliency.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

namespace invrise {
namespace {

using testing::FunctionClassifier;
using testing::random_image;
using testing::TempDir;

// Straight from the definitions: one mask at a time, no shared statistics.
struct Oracle {
  std::vector<double> invrise;
  std::vector<double> rise;
  std::vector<bool> defined;
};

Oracle brute_force(const Image& image, const std::function<double(const Image&)>& f,
                   const std::vector<LowResGrid>& grids, int side) {
  const std::size_t n = static_cast<std::size_t>(side) * side;
  std::vector<double> inv_num(n), hidden(n), rise_num(n), vis(n);
  for (const auto& g : grids) {
    const Mask m = upsample_bilinear(g, side);
    Image masked = image;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        for (int ch = 0; ch < image.channels(); ++ch) masked.at(r, c, ch) *= m.at(r, c);
      }
    }
    const double score = f(masked);
    for (std::size_t j = 0; j < n; ++j) {
      const bool h = m[j] <= 1e-9;
      inv_num[j] += (1.0 - score) * h;
      hidden[j] += h;
      rise_num[j] += score * m[j];
      vis[j] += m[j];
    }
  }
  Oracle out{std::vector<double>(n), std::vector<double>(n), std::vector<bool>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.defined[j] = hidden[j] > 0;
    out.invrise[j] = hidden[j] > 0 ? inv_num[j] / hidden[j] : 0.0;
    out.rise[j] = vis[j] > 0 ? rise_num[j] / vis[j] : 0.0;
  }
  return out;
}

double mean_intensity(const Image& img) {
  double s = 0.0;
  for (double v : img.pixels()) s += v;
  return s / img.pixels().size();
}

TEST(InvRise, MatchesBruteForceOnExhaustiveGrids) {
  for (int side : {4, 6, 9}) {
    const Image img = random_image(side, 1, side);
    auto fn = [](const Image& x) { return 1.0 / (1.0 + std::exp(-8.0 * (mean_intensity(x) - 0.25))); };
    const auto grids = enumerate_grids(2);
    const auto oracle = brute_force(img, fn, grids, side);
    const MaskSet masks = MaskSet::from_grids(grids, side);
    const FunctionClassifier clf(fn);
    const auto inv = invrise_saliency(img, clf, masks, Label::kNok);
    const auto rise = rise_saliency(img, clf, masks, Label::kNok);
    for (std::size_t j = 0; j < oracle.invrise.size(); ++j) {
      EXPECT_NEAR(inv.values[j], oracle.invrise[j], 1e-12) << "side " << side << " pixel " << j;
      EXPECT_NEAR(rise.values[j], oracle.rise[j], 1e-12) << "side " << side << " pixel " << j;
    }
  }
}

TEST(InvRise, MatchesBruteForceOnSampledMasks) {
  const int side = 16;
  const Image img = random_image(side, 3, 4);
  auto fn = [](const Image& x) { return std::clamp(x.at(5, 5, 0) + 0.3 * x.at(10, 12, 2), 0.0, 1.0); };
  const MaskSet masks = sample_masks(300, 4, 0.5, side, 17);
  const auto oracle = brute_force(img, fn, masks.grids(), side);
  const auto inv = invrise_saliency(img, FunctionClassifier(fn), masks, Label::kNok);
  for (std::size_t j = 0; j < oracle.invrise.size(); ++j) {
    EXPECT_NEAR(inv.values[j], oracle.invrise[j], 1e-12);
  }
}

TEST(InvRise, ConstantClassifierGivesComplement) {
  for (double c : {0.0, 0.3, 1.0}) {
    const MaskSet masks = sample_masks(200, 4, 0.5, 16, 3);
    const FunctionClassifier clf([c](const Image&) { return c; });
    const Image img = random_image(16, 1, 1);
    const auto inv = invrise_saliency(img, clf, masks, Label::kNok);
    const auto rise = rise_saliency(img, clf, masks, Label::kNok);
    ASSERT_TRUE(inv.undefined_pixels.empty());
    for (std::size_t j = 0; j < 256; ++j) {
      EXPECT_NEAR(inv.values[j], 1.0 - c, 1e-12);
      EXPECT_NEAR(rise.values[j], c, 1e-12);
    }
  }
}

TEST(InvRise, TargetClassesSumToOne) {
  const Image img = random_image(16, 1, 9);
  const FunctionClassifier clf([](const Image& x) { return mean_intensity(x); });
  const MaskSet masks = sample_masks(150, 4, 0.5, 16, 5);
  const auto nok = invrise_saliency(img, clf, masks, Label::kNok);
  const auto ok = invrise_saliency(img, clf, masks, Label::kOk);
  for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(nok.values[j] + ok.values[j], 1.0, 1e-12);
}

TEST(InvRise, AffineInClassifierOutput) {
  // S is 1 - E[f | pixel hidden], so f' = a f + b gives S' = 1 - a (1 - S) - b.
  const Image img = random_image(16, 1, 2);
  auto f = [](const Image& x) { return mean_intensity(x); };
  const double a = 0.5, b = 0.2;
  const MaskSet masks = sample_masks(120, 4, 0.5, 16, 6);
  const auto s = invrise_saliency(img, FunctionClassifier(f), masks, Label::kNok);
  const auto s2 = invrise_saliency(img, FunctionClassifier([&](const Image& x) { return a * f(x) + b; }),
                                   masks, Label::kNok);
  for (std::size_t j = 0; j < 256; ++j) EXPECT_NEAR(s2.values[j], 1.0 - a * (1.0 - s.values[j]) - b, 1e-12);
}

TEST(InvRise, ExactlyKClassifierCalls) {
  for (int k : {1, 63, 64, 65, 200}) {
    const MaskSet masks = sample_masks(k, 4, 0.5, 16, 1);
    const FunctionClassifier clf([](const Image&) { return 0.5; });
    invrise_saliency(random_image(16, 1, 0), clf, masks, Label::kNok);
    EXPECT_EQ(clf.calls(), static_cast<std::size_t>(k));
    const FunctionClassifier clf2([](const Image&) { return 0.5; });
    rise_saliency(random_image(16, 1, 0), clf2, masks, Label::kNok);
    EXPECT_EQ(clf2.calls(), static_cast<std::size_t>(k));
  }
}

TEST(InvRise, SingleHiddenPixelDetectorExhaustive) {
  // With l equal to the image side every mask is its own grid, so the only
  // grids scoring 0 are those hiding the planted pixel: S(p) = 1, S(q) = 1/2.
  const auto grids = enumerate_grids(4);
  const MaskSet masks = MaskSet::from_grids(grids, 4);
  const Image img(4, 1, 1.0);
  for (int p = 0; p < 16; ++p) {
    const FunctionClassifier clf([p](const Image& x) { return x.pixels()[p] > 1e-9 ? 1.0 : 0.0; });
    const auto s = invrise_saliency(img, clf, masks, Label::kNok);
    EXPECT_EQ(argmax_pixel(s), static_cast<std::size_t>(p));
    for (int q = 0; q < 16; ++q) EXPECT_DOUBLE_EQ(s.values[q], q == p ? 1.0 : 0.5);
  }
}

TEST(InvRise, SingleHiddenPixelDetectorCoarseGrid) {
  // l = 2 on a 4x4 image: argmax falls on the planted pixel exactly when no
  // other pixel has a strictly smaller hidden set that ties and comes first.
  const auto grids = enumerate_grids(2);
  const MaskSet masks = MaskSet::from_grids(grids, 4);
  const Image img(4, 1, 1.0);
  std::vector<int> exact;
  for (int p = 0; p < 16; ++p) {
    auto fn = [p](const Image& x) { return x.pixels()[p] > 1e-9 ? 1.0 : 0.0; };
    const auto s = invrise_saliency(img, FunctionClassifier(fn), masks, Label::kNok);
    const auto oracle = brute_force(img, fn, grids, 4);
    std::size_t best = 0;
    for (std::size_t j = 1; j < 16; ++j) {
      if (oracle.invrise[j] > oracle.invrise[best]) best = j;
    }
    EXPECT_EQ(argmax_pixel(s), best);
    EXPECT_DOUBLE_EQ(s.values[p], 1.0);
    if (argmax_pixel(s) == static_cast<std::size_t>(p)) exact.push_back(p);
  }
  EXPECT_EQ(exact, (std::vector<int>{0, 2, 8, 10}));
}

TEST(InvRise, UndefinedPixelsAreZero) {
  LowResGrid ones(2);
  for (auto& v : ones.values()) v = 1;
  const MaskSet masks = MaskSet::from_grids({ones}, 8);
  const auto s = invrise_saliency(random_image(8, 1, 1), FunctionClassifier([](const Image&) { return 0.2; }),
                                  masks, Label::kNok);
  EXPECT_EQ(s.undefined_pixels.size(), 64u);
  for (double v : s.values.values()) EXPECT_EQ(v, 0.0);
}

TEST(InvRise, SoftComplementMatchesOracle) {
  const int side = 8;
  const Image img = random_image(side, 1, 3);
  auto fn = [](const Image& x) { return x.at(2, 6); };
  const MaskSet masks = sample_masks(50, 2, 0.5, side, 8);
  std::vector<double> num(64), den(64);
  for (int i = 0; i < masks.k(); ++i) {
    const Mask m = masks.mask(i);
    const double score = fn(apply_mask(img, m));
    for (int j = 0; j < 64; ++j) {
      num[j] += (1.0 - score) * (1.0 - m[j]);
      den[j] += 1.0 - m[j];
    }
  }
  SaliencyOptions opts;
  opts.soft_complement = true;
  const auto s = invrise_saliency(img, FunctionClassifier(fn), masks, Label::kNok, opts);
  for (int j = 0; j < 64; ++j) EXPECT_NEAR(s.values[j], num[j] / den[j], 1e-12);
}

TEST(InvRise, BatchSizeDoesNotChangeResult) {
  const Image img = random_image(16, 1, 11);
  const FunctionClassifier clf([](const Image& x) { return mean_intensity(x); });
  const MaskSet masks = sample_masks(100, 4, 0.5, 16, 2);
  SaliencyOptions one;
  one.batch_size = 1;
  EXPECT_EQ(invrise_saliency(img, clf, masks, Label::kNok, one).values,
            invrise_saliency(img, clf, masks, Label::kNok).values);
}

TEST(InvRise, ClassifierFailureReportsProgress) {
  std::atomic<int> n{0};
  const FunctionClassifier clf([&n](const Image&) {
    if (++n > 70) throw std::runtime_error("boom");
    return 0.5;
  });
  try {
    invrise_saliency(random_image(8, 1, 0), clf, sample_masks(100, 2, 0.5, 8, 0), Label::kNok);
    FAIL();
  } catch (const SaliencyError& e) {
    EXPECT_EQ(e.completed_evaluations(), 64u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  EXPECT_THROW(invrise_saliency(random_image(8, 1, 0), clf, sample_masks(5, 2, 0.5, 16, 0), Label::kNok),
               std::invalid_argument);
}

TEST(MaskSet, SeedDeterminism) {
  const auto a = sample_masks(50, 8, 0.5, 64, 7);
  const auto b = sample_masks(50, 8, 0.5, 64, 7);
  const auto c = sample_masks(50, 8, 0.5, 64, 8);
  EXPECT_EQ(a.grids(), b.grids());
  EXPECT_NE(a.grids(), c.grids());
}

TEST(MaskSet, OcclusionCountsMatchDefinition) {
  for (bool shift : {false, true}) {
    MaskSetConfig cfg{80, 4, 0.4, 16, 3, shift};
    const MaskSet set = MaskSet::sample(cfg);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        int hidden = 0;
        for (int i = 0; i < set.k(); ++i) hidden += set.mask(i).at(r, c) <= 1e-9;
        EXPECT_EQ(set.hidden_counts()[r * 16 + c], static_cast<std::uint32_t>(hidden));
        EXPECT_DOUBLE_EQ(occlusion_probability(set, r, c), hidden / 80.0);
      }
    }
  }
  EXPECT_THROW(occlusion_probability(sample_masks(2, 2, 0.5, 4, 0), 4, 0), std::invalid_argument);
}

TEST(MaskSet, HiddenPixelsAreConstantSquares) {
  // Without shift a pixel is hidden iff every cell it interpolates from is 0.
  const MaskSet set = sample_masks(40, 8, 0.5, 64, 4);
  for (int i = 0; i < set.k(); ++i) {
    const Mask m = set.mask(i);
    const auto& g = set.grids()[i];
    for (int r = 0; r < 64; ++r) {
      for (int c = 0; c < 64; ++c) {
        // Cell centers sit at 8j + 4; a pixel reads cells lo..hi of each axis.
        auto span = [](int x) {
          if (x <= 4) return std::pair{0, 0};
          if (x >= 60) return std::pair{7, 7};
          const int lo = (x - 4) / 8;
          return std::pair{lo, (x - 4) % 8 == 0 ? lo : lo + 1};
        };
        const auto [r0, r1] = span(r);
        const auto [c0, c1] = span(c);
        const bool all_zero = !g.at(r0, c0) && !g.at(r0, c1) && !g.at(r1, c0) && !g.at(r1, c1);
        ASSERT_EQ(m.at(r, c) <= 1e-9, all_zero) << i << " " << r << " " << c;
      }
    }
  }
}

TEST(MaskSet, InvalidParameters) {
  EXPECT_THROW(sample_masks(0, 8, 0.5, 64, 0), std::invalid_argument);
  EXPECT_THROW(sample_masks(10, 8, 0.0, 64, 0), std::invalid_argument);
  EXPECT_THROW(sample_masks(10, 8, 1.0, 64, 0), std::invalid_argument);
  EXPECT_THROW(sample_masks(10, 65, 0.5, 64, 0), std::invalid_argument);
  EXPECT_THROW(MaskSet::sample({10, 7, 0.5, 64, 0, true}), std::invalid_argument);
  EXPECT_THROW(enumerate_grids(5), std::invalid_argument);
  EXPECT_EQ(enumerate_grids(3).size(), 512u);
}

SaliencyMap map_from(std::vector<double> v) {
  const int side = static_cast<int>(std::lround(std::sqrt(v.size())));
  return SaliencyMap{SaliencyGrid(side, std::move(v)), SaliencyMethod::kInvRise, Label::kNok, {}};
}

TEST(Binarize, TopFractionWithTies) {
  const auto m = binarize_topfraction(map_from({0.1, 0.9, 0.5, 0.5, 0.5, 0.2, 0.0, 0.5, 0.3}), 0.3);
  // ceil(0.3 * 9) = 3: the 0.9 and the first two 0.5s in row-major order.
  const auto bits = m.values();
  EXPECT_EQ(std::vector<std::uint8_t>(bits.begin(), bits.end()),
            (std::vector<std::uint8_t>{0, 1, 1, 1, 0, 0, 0, 0, 0}));
  const auto flat = binarize_topfraction(map_from(std::vector<double>(16, 0.4)), 0.1);
  EXPECT_EQ(count_ones(flat), 2u);
  EXPECT_EQ(flat[0] + flat[1], 2);
  EXPECT_EQ(count_ones(binarize_topfraction(map_from(std::vector<double>(100, 0.0)), 0.7)), 70u);
  EXPECT_THROW(binarize_topfraction(map_from({1, 2, 3, 4}), 0.0), std::invalid_argument);
}

TEST(Argmax, FirstMaximumWins) {
  EXPECT_EQ(argmax_pixel(map_from({0, 3, 1, 3})), 1u);
  EXPECT_EQ(argmax_pixel(map_from({2, 2, 2, 2})), 0u);
}

TEST(SaliencyFile, RoundTripAndCorruption) {
  TempDir dir;
  const auto map = map_from({0.0, -1.5, 1e-300, 0.25});
  save_saliency(dir / "s.bin", map);
  EXPECT_EQ(load_saliency(dir / "s.bin"), map.values);
  std::ofstream(dir / "bad.bin") << "IVRSSALM\x02";
  EXPECT_THROW(load_saliency(dir / "bad.bin"), LoadError);
  std::ofstream(dir / "wrong.bin") << "garbage!";
  EXPECT_THROW(load_saliency(dir / "wrong.bin"), LoadError);
}

TEST(Overlay, HeatGoesToRedChannel) {
  const Image img(2, 1, 0.5);
  const auto o = saliency_overlay(img, map_from({0, 0, 0, 1}));
  EXPECT_EQ(o.channels(), 3);
  EXPECT_DOUBLE_EQ(o.at(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(o.at(1, 1, 0), 0.5 * 0.4 + 0.6);
  EXPECT_DOUBLE_EQ(o.at(1, 1, 1), 0.2);
}

TEST(Method, ParseAndDispatch) {
  EXPECT_EQ(parse_saliency_method("rise"), SaliencyMethod::kRise);
  EXPECT_EQ(parse_saliency_method("InvRISE"), SaliencyMethod::kInvRise);
  EXPECT_THROW(parse_saliency_method("gradcam"), std::invalid_argument);
  const FunctionClassifier clf([](const Image&) { return 0.25; });
  const MaskSet masks = sample_masks(20, 2, 0.5, 4, 0);
  EXPECT_DOUBLE_EQ(explain(SaliencyMethod::kRise, Image(4, 1, 1.0), clf, masks, Label::kNok).values[0], 0.25);
  EXPECT_DOUBLE_EQ(explain(SaliencyMethod::kInvRise, Image(4, 1, 1.0), clf, masks, Label::kNok).values[0], 0.75);
}

}  // namespace
}  // namespace invrise
