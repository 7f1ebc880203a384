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

// Randomized-masking saliency for black-box classifiers.
//
// A MaskSet holds k Bernoulli(p) grids of side l, each bilinearly upsampled
// to the image side. Two estimators run over it:
//
//   RISE     S(λ) = Σ_m f(I⊙m) m(λ) / (k v̄(λ))          v̄(λ) = mean_m m(λ)
//   InvRISE  S(λ) = 1/P[M_λ=0] · Σ_m (1 − f(I⊙m)) m̄(λ) / k
//
// where f is the confidence of the target class, m̄(λ) = 1 iff m(λ) ≤ 1e-9
// (the pixel is fully hidden), and P[M_λ=0] is the fraction of masks that
// hide λ. Every mask is scored once and the score reused for all pixels, so
// both estimators make exactly k classifier calls.

#ifndef INVRISE_SALIENCY_HPP_
#define INVRISE_SALIENCY_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/imaging.hpp"

namespace invrise {

// A pixel counts as hidden when its mask value is at most this.
inline constexpr double kHiddenEpsilon = 1e-9;

struct MaskSetConfig {
  int k = 1000;
  int l = 8;
  double p = 0.5;  // probability that a cell is visible
  int side = 64;
  std::uint64_t seed = 0;
  // Sample (l+1)-cell grids and crop the upsampled mask at a random offset
  // within one tile, as in the original RISE sampler. Off by default.
  bool random_shift = false;
};

class MaskSet {
 public:
  MaskSet() = default;

  static MaskSet sample(const MaskSetConfig& config) {
    if (config.k < 1) throw std::invalid_argument("sample_masks: k must be >= 1");
    if (!(config.p > 0.0 && config.p < 1.0)) {
      throw std::invalid_argument("sample_masks: p must lie in (0, 1)");
    }
    if (config.l < 1 || config.l > config.side) {
      throw std::invalid_argument("sample_masks: need 1 <= l <= side");
    }
    if (config.random_shift && config.side % config.l != 0) {
      throw std::invalid_argument("sample_masks: random shift needs side divisible by l");
    }
    MaskSet set;
    set.config_ = config;
    Rng rng(config.seed);
    const int cells = config.random_shift ? config.l + 1 : config.l;
    const int tile = config.side / config.l;
    set.grids_.reserve(config.k);
    for (int i = 0; i < config.k; ++i) {
      LowResGrid grid(cells);
      for (auto& cell : grid.values()) cell = rng.bernoulli(config.p) ? 1 : 0;
      set.grids_.push_back(std::move(grid));
      if (config.random_shift) {
        set.shifts_.push_back({rng.uniform_int(0, tile - 1), rng.uniform_int(0, tile - 1)});
      }
    }
    set.compute_statistics();
    return set;
  }

  // Uses the given grids verbatim (each weighted 1/k). Handy for exhaustive
  // enumerations and hand-built fixtures.
  static MaskSet from_grids(std::vector<LowResGrid> grids, int side) {
    if (grids.empty()) throw std::invalid_argument("MaskSet: need at least one grid");
    MaskSet set;
    set.config_.k = static_cast<int>(grids.size());
    set.config_.l = grids.front().side();
    set.config_.side = side;
    set.config_.p = 0.5;
    for (const auto& g : grids) {
      if (g.side() != set.config_.l) throw std::invalid_argument("MaskSet: grids differ in size");
    }
    set.grids_ = std::move(grids);
    set.compute_statistics();
    return set;
  }

  const MaskSetConfig& config() const { return config_; }
  int k() const { return config_.k; }
  int l() const { return config_.l; }
  double p() const { return config_.p; }
  int side() const { return config_.side; }
  std::uint64_t seed() const { return config_.seed; }
  const std::vector<LowResGrid>& grids() const { return grids_; }

  // The i-th upsampled mask, recomputed on demand from its grid so large
  // sets stay small in memory.
  Mask mask(std::size_t i) const {
    if (!config_.random_shift) return upsample_bilinear(grids_.at(i), config_.side);
    const int tile = config_.side / config_.l;
    const Mask big = upsample_bilinear(grids_.at(i), config_.side + tile);
    const auto [dr, dc] = shifts_.at(i);
    Mask out(config_.side);
    for (int r = 0; r < config_.side; ++r) {
      for (int c = 0; c < config_.side; ++c) out.at(r, c) = big.at(r + dr, c + dc);
    }
    return out;
  }

  // Number of masks hiding each pixel, row-major.
  std::span<const std::uint32_t> hidden_counts() const { return hidden_counts_; }
  // P[M_λ = 0] per pixel, row-major.
  std::span<const double> occlusion_prob() const { return occlusion_prob_; }
  // Mean soft mask value per pixel, row-major.
  std::span<const double> mean_visibility() const { return mean_visibility_; }

 private:
  void compute_statistics() {
    const std::size_t n = static_cast<std::size_t>(config_.side) * config_.side;
    hidden_counts_.assign(n, 0);
    std::vector<double> visible_sum(n, 0.0);
    for (std::size_t i = 0; i < grids_.size(); ++i) {
      const Mask m = mask(i);
      for (std::size_t j = 0; j < n; ++j) {
        hidden_counts_[j] += m[j] <= kHiddenEpsilon;
        visible_sum[j] += m[j];
      }
    }
    occlusion_prob_.resize(n);
    mean_visibility_.resize(n);
    const double k = static_cast<double>(grids_.size());
    for (std::size_t j = 0; j < n; ++j) {
      occlusion_prob_[j] = hidden_counts_[j] / k;
      mean_visibility_[j] = visible_sum[j] / k;
    }
  }

  MaskSetConfig config_;
  std::vector<LowResGrid> grids_;
  std::vector<std::pair<int, int>> shifts_;
  std::vector<std::uint32_t> hidden_counts_;
  std::vector<double> occlusion_prob_;
  std::vector<double> mean_visibility_;
};

inline MaskSet sample_masks(int k, int l, double p, int side, std::uint64_t seed) {
  return MaskSet::sample(MaskSetConfig{k, l, p, side, seed, false});
}

// Fraction of masks hiding pixel (row, col).
inline double occlusion_probability(const MaskSet& set, int row, int col) {
  if (row < 0 || col < 0 || row >= set.side() || col >= set.side()) {
    throw std::invalid_argument("occlusion_probability: pixel out of bounds");
  }
  return set.occlusion_prob()[static_cast<std::size_t>(row) * set.side() + col];
}

// Every l x l binary grid, in counting order (cell i is bit i). l <= 4.
inline std::vector<LowResGrid> enumerate_grids(int l) {
  if (l < 1 || l > 4) throw std::invalid_argument("enumerate_grids: l must be in [1, 4]");
  const int cells = l * l;
  std::vector<LowResGrid> out;
  for (std::uint32_t bits = 0; bits < (1u << cells); ++bits) {
    LowResGrid g(l);
    for (int i = 0; i < cells; ++i) g[i] = (bits >> i) & 1u;
    out.push_back(std::move(g));
  }
  return out;
}

enum class SaliencyMethod { kRise, kInvRise };

inline std::string_view to_string(SaliencyMethod m) {
  return m == SaliencyMethod::kRise ? "RISE" : "InvRISE";
}

inline SaliencyMethod parse_saliency_method(std::string_view text) {
  if (text == "RISE" || text == "rise") return SaliencyMethod::kRise;
  if (text == "InvRISE" || text == "invrise") return SaliencyMethod::kInvRise;
  throw std::invalid_argument("unknown saliency method: " + std::string(text));
}

struct SaliencyTag {};
using SaliencyGrid = SquareGrid<double, SaliencyTag>;

struct SaliencyMap {
  SaliencyGrid values;
  SaliencyMethod method = SaliencyMethod::kInvRise;
  Label target = Label::kNok;
  // Row-major indices where the normalizer was zero; their value is 0.
  std::vector<std::size_t> undefined_pixels;

  int side() const { return values.side(); }
};

struct SaliencyOptions {
  // InvRISE ablation: weight by 1 − m(λ) instead of the hard indicator.
  bool soft_complement = false;
  // Masked images scored per predict_batch call.
  std::size_t batch_size = 64;
};

// Classifier failure in the middle of a saliency run.
class SaliencyError : public Error {
 public:
  SaliencyError(const std::string& what, std::size_t completed)
      : Error(what + " (after " + std::to_string(completed) + " completed evaluations)"),
        completed_(completed) {}
  std::size_t completed_evaluations() const { return completed_; }

 private:
  std::size_t completed_;
};

namespace detail {

// f_target(I ⊙ m_i) for every mask, in mask order.
inline std::vector<double> score_masked(const Image& image, const BlackBoxClassifier& classifier,
                                        const MaskSet& masks, Label target,
                                        std::size_t batch_size) {
  if (image.side() != masks.side()) {
    throw std::invalid_argument("saliency: mask side does not match image side");
  }
  const std::size_t k = static_cast<std::size_t>(masks.k());
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<double> scores;
  scores.reserve(k);
  std::vector<Image> batch;
  for (std::size_t start = 0; start < k; start += batch_size) {
    const std::size_t end = std::min(k, start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(apply_mask(image, masks.mask(i)));
    std::vector<double> confidences;
    try {
      confidences = classifier.predict_batch(batch);
    } catch (const std::exception& e) {
      throw SaliencyError(std::string("classifier failed: ") + e.what(), start);
    }
    if (confidences.size() != batch.size()) {
      throw SaliencyError("classifier returned the wrong number of scores", start);
    }
    for (double c : confidences) scores.push_back(class_confidence(c, target));
  }
  return scores;
}

}  // namespace detail

// InvRISE from precomputed per-mask target confidences.
inline SaliencyMap invrise_from_scores(const MaskSet& masks, std::span<const double> scores,
                                       Label target, const SaliencyOptions& options = {}) {
  const int side = masks.side();
  const std::size_t n = static_cast<std::size_t>(side) * side;
  const double weight = 1.0 / masks.k();
  std::vector<double> sum(n, 0.0);
  std::vector<double> normalizer(n, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Mask m = masks.mask(i);
    const double rejection = 1.0 - scores[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double complement =
          options.soft_complement ? 1.0 - m[j] : (m[j] <= kHiddenEpsilon ? 1.0 : 0.0);
      sum[j] += rejection * complement * weight;
      normalizer[j] += complement * weight;
    }
  }
  SaliencyMap out{SaliencyGrid(side), SaliencyMethod::kInvRise, target, {}};
  const auto occlusion = masks.occlusion_prob();
  for (std::size_t j = 0; j < n; ++j) {
    const double denom = options.soft_complement ? normalizer[j] : occlusion[j];
    if (denom > 0.0) {
      out.values[j] = sum[j] / denom;
    } else {
      out.undefined_pixels.push_back(j);
    }
  }
  return out;
}

// RISE from precomputed per-mask target confidences.
inline SaliencyMap rise_from_scores(const MaskSet& masks, std::span<const double> scores,
                                    Label target) {
  const int side = masks.side();
  const std::size_t n = static_cast<std::size_t>(side) * side;
  std::vector<double> sum(n, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Mask m = masks.mask(i);
    for (std::size_t j = 0; j < n; ++j) sum[j] += scores[i] * m[j];
  }
  SaliencyMap out{SaliencyGrid(side), SaliencyMethod::kRise, target, {}};
  const auto visibility = masks.mean_visibility();
  const double k = masks.k();
  for (std::size_t j = 0; j < n; ++j) {
    if (visibility[j] > 0.0) {
      out.values[j] = sum[j] / (k * visibility[j]);
    } else {
      out.undefined_pixels.push_back(j);
    }
  }
  return out;
}

inline SaliencyMap invrise_saliency(const Image& image, const BlackBoxClassifier& classifier,
                           const MaskSet& masks, Label target,
                           const SaliencyOptions& options = {}) {
  const auto scores = detail::score_masked(image, classifier, masks, target, options.batch_size);
  return invrise_from_scores(masks, scores, target, options);
}

inline SaliencyMap rise_saliency(const Image& image, const BlackBoxClassifier& classifier,
                        const MaskSet& masks, Label target, const SaliencyOptions& options = {}) {
  const auto scores = detail::score_masked(image, classifier, masks, target, options.batch_size);
  return rise_from_scores(masks, scores, target);
}

inline SaliencyMap explain(SaliencyMethod method, const Image& image,
                           const BlackBoxClassifier& classifier, const MaskSet& masks,
                           Label target, const SaliencyOptions& options = {}) {
  return method == SaliencyMethod::kRise ? rise_saliency(image, classifier, masks, target, options)
                                         : invrise_saliency(image, classifier, masks, target, options);
}

// Row-major index of the maximal value; ties go to the smallest index.
inline std::size_t argmax_pixel(const SaliencyMap& map) {
  const auto v = map.values.values();
  if (v.empty()) throw std::invalid_argument("argmax_pixel: empty saliency map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Marks the ceil(fraction * side^2) most salient pixels. Ties are broken by
// row-major order, earlier pixels first.
inline BinaryMask binarize_topfraction(const SaliencyMap& map, double fraction = 0.10) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("binarize_topfraction: fraction must lie in (0, 1]");
  }
  const auto v = map.values.values();
  const std::size_t n = v.size();
  // The small slack keeps products such as 0.7 * 10 from rounding up to 8.
  const auto count = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  BinaryMask out(map.side());
  for (std::size_t i = 0; i < count; ++i) out[order[i]] = 1;
  return out;
}

// Float-grid export: "IVRSSALM", u32 side, side^2 little-endian f64.
inline void save_saliency(const std::filesystem::path& path, const SaliencyMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("IVRSSALM", 8);
  const auto side = static_cast<std::uint32_t>(map.side());
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((side >> (8 * i)) & 0xFF));
  for (double v : map.values.values()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  if (!out) throw Error("short write to " + path.string());
}

inline SaliencyGrid load_saliency(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), 8);
  if (!in || std::string_view(magic.data(), 8) != "IVRSSALM") {
    throw LoadError(path.string() + ": not a saliency grid");
  }
  std::array<unsigned char, 4> header{};
  in.read(reinterpret_cast<char*>(header.data()), 4);
  if (!in) throw LoadError(path.string() + ": truncated saliency grid");
  std::uint32_t side = 0;
  for (int i = 0; i < 4; ++i) side |= static_cast<std::uint32_t>(header[i]) << (8 * i);
  const auto count = static_cast<std::uint64_t>(side) * side;
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec || size != 12 + 8 * count) throw LoadError(path.string() + ": truncated saliency grid");
  std::vector<double> values(count);
  for (auto& v : values) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  if (!in) throw LoadError(path.string() + ": truncated saliency grid");
  return SaliencyGrid(static_cast<int>(side), std::move(values));
}

// Grayscale image blended with a red heat layer proportional to min-max
// normalized saliency. Returns a 3-channel image.
inline Image saliency_overlay(const Image& image, const SaliencyMap& map, double opacity = 0.6) {
  if (image.side() != map.side()) throw std::invalid_argument("saliency_overlay: size mismatch");
  const Image gray = convert_channels(image, 1);
  const auto v = map.values.values();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  Image out(image.side(), 3);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double heat = range > 0.0 ? (v[i] - lo) / range : 0.0;
    const double a = opacity * heat;
    const double g = gray.pixels()[i] * (1.0 - a);
    out.pixels()[i * 3] = std::min(1.0, g + a);
    out.pixels()[i * 3 + 1] = g;
    out.pixels()[i * 3 + 2] = g;
  }
  return out;
}

}  // namespace invrise

#endif  // INVRISE_SALIENCY_HPP_
