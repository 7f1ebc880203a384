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

// The black-box classifier contract and the built-in convolutional scorer.
//
// A BlackBoxClassifier answers two questions about an image: how confident it
// is that the image is NOK, and what its penultimate-layer embedding is.
// Nothing else in the workbench looks inside a classifier.
//
// ConvScorer is a deliberately small network with hand-written
// backpropagation:
//
//   input (C x S x S)
//     -> conv 3x3, 8 maps, same padding, ReLU, 2x2 average pool
//     -> conv 3x3, 16 maps, same padding, ReLU, 2x2 average pool
//     -> global average pool (16)
//     -> linear 16 -> 32, ReLU            (the embedding)
//     -> linear 32 -> 1, logistic         (NOK confidence)
//
// Average pooling followed by global averaging equals the global mean of the
// un-pooled map, so the second pool is folded into the global average.

#ifndef INVRISE_CLASSIFIER_HPP_
#define INVRISE_CLASSIFIER_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invrise/common.hpp"
#include "invrise/imaging.hpp"

namespace invrise {

using Embedding = std::vector<double>;

struct Scored {
  double confidence = 0.0;  // P(NOK)
  Embedding embedding;
};

inline Label predicted_label(double nok_confidence) {
  return nok_confidence >= 0.5 ? Label::kNok : Label::kOk;
}

// Confidence for `target` given the NOK confidence.
inline double class_confidence(double nok_confidence, Label target) {
  return target == Label::kNok ? nok_confidence : 1.0 - nok_confidence;
}

class BlackBoxClassifier {
 public:
  virtual ~BlackBoxClassifier() = default;

  // Probability that the image is NOK, in [0, 1].
  virtual double predict(const Image& image) const = 0;
  virtual Embedding embed(const Image& image) const = 0;
  virtual std::size_t embedding_size() const = 0;

  virtual Scored score(const Image& image) const { return {predict(image), embed(image)}; }

  // Batched prediction. Out-of-process implementations pipeline requests.
  virtual std::vector<double> predict_batch(std::span<const Image> images) const {
    std::vector<double> out;
    out.reserve(images.size());
    for (const auto& image : images) out.push_back(predict(image));
    return out;
  }

  double ok_confidence(const Image& image) const { return 1.0 - predict(image); }
};

struct ScorerConfig {
  int input_side = 64;
  int channels = 1;
  int conv1_maps = 8;
  int conv2_maps = 16;
  int embedding_width = 32;
  // Per-image zero-mean, unit-variance input scaling (constant images map
  // to all zeros).
  bool standardize = true;
};

struct Sample {
  const Image* image = nullptr;
  Label label = Label::kOk;
  // Pixels carrying the NOK evidence, if known. Used by occlusion
  // augmentation to decide whether a masked NOK image is still NOK.
  const BinaryMask* evidence = nullptr;
};

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  int patience = 10;
  int max_epochs = 50;
  int batch_size = 16;
  std::uint64_t seed = 0;
  // Probability of showing a sample under a fresh random occlusion mask
  // (l x l Bernoulli(0.5) grid, bilinearly upsampled, shifted). OK samples
  // keep target 0; NOK samples with evidence get the visible fraction of the
  // evidence as target; NOK samples without evidence are never occluded.
  double occlusion_augmentation = 0.0;
  int occlusion_cells = 8;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate < 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw std::invalid_argument("TrainConfig: momentum outside [0, 1)");
    }
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience < 1");
    if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs < 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
    if (!(occlusion_augmentation >= 0.0 && occlusion_augmentation <= 1.0)) {
      throw std::invalid_argument("TrainConfig: occlusion_augmentation outside [0, 1]");
    }
    if (occlusion_cells < 1) throw std::invalid_argument("TrainConfig: occlusion_cells < 1");
  }
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> validation_loss;
  std::optional<double> validation_accuracy;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;  // epoch whose parameters were restored, -1 if none
  bool early_stopped = false;
  std::vector<std::string> warnings;
};

class ConvScorer final : public BlackBoxClassifier {
 public:
  ConvScorer() = default;

  explicit ConvScorer(ScorerConfig config) : config_(config) {
    if (config.input_side < 4 || config.input_side % 4 != 0) {
      throw std::invalid_argument("ConvScorer: input_side must be a positive multiple of 4");
    }
    if (config.channels != 1 && config.channels != 3) {
      throw std::invalid_argument("ConvScorer: channels must be 1 or 3");
    }
    if (config.conv1_maps < 1 || config.conv2_maps < 1 || config.embedding_width < 1) {
      throw std::invalid_argument("ConvScorer: layer widths must be positive");
    }
    layout_ = Layout(config);
    params_.assign(layout_.total, 0.0);
  }

  // Glorot-uniform weights, zero biases.
  ConvScorer(ScorerConfig config, std::uint64_t init_seed) : ConvScorer(config) {
    initialize(init_seed);
  }

  bool initialized() const { return !params_.empty(); }
  const ScorerConfig& config() const { return config_; }

  // Bumped whenever parameters change; lets caches detect staleness.
  std::uint64_t version() const { return version_; }

  void initialize(std::uint64_t seed) {
    require_initialized();
    Rng rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, double fan_in, double fan_out) {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (std::size_t i = 0; i < count; ++i) params_[offset + i] = rng.uniform(-a, a);
    };
    std::fill(params_.begin(), params_.end(), 0.0);
    const auto& c = config_;
    fill(layout_.w1, layout_.w1_count(), c.channels * 9.0, c.conv1_maps * 9.0);
    fill(layout_.w2, layout_.w2_count(), c.conv1_maps * 9.0, c.conv2_maps * 9.0);
    fill(layout_.w3, layout_.w3_count(), c.conv2_maps, c.embedding_width);
    fill(layout_.w4, layout_.w4_count(), c.embedding_width, 1.0);
    ++version_;
  }

  // Zeroes the output unit; the scorer then answers 0.5 for every input.
  void zero_head() {
    require_initialized();
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layout_.w4),
                layout_.w4_count() + 1, 0.0);
    ++version_;
  }

  std::span<const double> parameters() const { return params_; }
  void set_parameters(std::vector<double> params) {
    require_initialized();
    if (params.size() != params_.size()) {
      throw std::invalid_argument("ConvScorer: parameter count mismatch");
    }
    params_ = std::move(params);
    ++version_;
  }

  std::size_t embedding_size() const override {
    return static_cast<std::size_t>(config_.embedding_width);
  }

  double predict(const Image& image) const override {
    require_initialized();
    Activations act(layout_);
    forward(preprocess(image), act);
    return act.prob;
  }

  Embedding embed(const Image& image) const override {
    require_initialized();
    Activations act(layout_);
    forward(preprocess(image), act);
    return act.hidden;
  }

  Scored score(const Image& image) const override {
    require_initialized();
    Activations act(layout_);
    forward(preprocess(image), act);
    return {act.prob, act.hidden};
  }

  // Single-sample binary cross-entropy and its gradient w.r.t. every
  // parameter (same layout as parameters()).
  double loss_and_gradient(const Image& image, Label label, std::vector<double>& grad) const {
    require_initialized();
    grad.assign(params_.size(), 0.0);
    Activations act(layout_);
    const auto input = preprocess(image);
    forward(input, act);
    backward(act, label == Label::kNok ? 1.0 : 0.0, 1.0, grad);
    return bce(act.logit, label);
  }

  double loss(const Image& image, Label label) const {
    require_initialized();
    Activations act(layout_);
    forward(preprocess(image), act);
    return bce(act.logit, label);
  }

  // Channel conversion and resizing to the configured input, returned as a
  // channel-major tensor.
  std::vector<double> preprocess(const Image& image) const {
    Image x = image;
    if (x.channels() != config_.channels) x = convert_channels(x, config_.channels);
    if (x.side() != config_.input_side) x = resize_bilinear(x, config_.input_side);
    const int n = config_.input_side;
    const int ch = config_.channels;
    std::vector<double> tensor(static_cast<std::size_t>(ch) * n * n);
    const auto px = x.pixels();
    for (int c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * n; ++i) {
        tensor[c * static_cast<std::size_t>(n) * n + i] = px[i * ch + c];
      }
    }
    if (config_.standardize) {
      double mean = 0.0, sq = 0.0;
      for (double v : tensor) {
        mean += v;
        sq += v * v;
      }
      mean /= static_cast<double>(tensor.size());
      const double sd = std::sqrt(std::max(sq / static_cast<double>(tensor.size()) - mean * mean, 0.0));
      for (double& v : tensor) v = sd > 1e-12 ? (v - mean) / sd : 0.0;
    }
    return tensor;
  }

  // Checkpoint: "IVRSCKPT", u32 version, 6 x u32 config, u64 count, f64 LE.
  void save(const std::filesystem::path& path) const {
    require_initialized();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(config_.input_side));
    put_u32(out, static_cast<std::uint32_t>(config_.channels));
    put_u32(out, static_cast<std::uint32_t>(config_.conv1_maps));
    put_u32(out, static_cast<std::uint32_t>(config_.conv2_maps));
    put_u32(out, static_cast<std::uint32_t>(config_.embedding_width));
    put_u32(out, config_.standardize ? 1U : 0U);
    put_u64(out, params_.size());
    for (double p : params_) put_u64(out, std::bit_cast<std::uint64_t>(p));
    if (!out) throw Error("short write to checkpoint " + path.string());
  }

  static ConvScorer load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw LoadError(path.string() + ": not an invrise checkpoint");
    if (get_u32(in) != kCheckpointVersion) {
      throw LoadError(path.string() + ": unsupported checkpoint version");
    }
    ScorerConfig config;
    config.input_side = static_cast<int>(get_u32(in));
    config.channels = static_cast<int>(get_u32(in));
    config.conv1_maps = static_cast<int>(get_u32(in));
    config.conv2_maps = static_cast<int>(get_u32(in));
    config.embedding_width = static_cast<int>(get_u32(in));
    const std::uint32_t standardize = get_u32(in);
    if (standardize > 1) throw LoadError(path.string() + ": bad standardize flag");
    config.standardize = standardize == 1;
    if (!in) throw LoadError(path.string() + ": truncated header");
    ConvScorer scorer;
    try {
      scorer = ConvScorer(config);
    } catch (const std::invalid_argument& e) {
      throw LoadError(path.string() + ": " + e.what());
    }
    const std::uint64_t count = get_u64(in);
    if (count != scorer.params_.size()) {
      throw LoadError(path.string() + ": parameter count does not match architecture");
    }
    for (auto& p : scorer.params_) p = std::bit_cast<double>(get_u64(in));
    if (!in) throw LoadError(path.string() + ": truncated parameters");
    scorer.version_ = 1;
    return scorer;
  }

 private:
  friend TrainLog train(ConvScorer&, std::span<const Sample>, std::span<const Sample>,
                        const TrainConfig&);

  static constexpr std::array<char, 8> kMagic = {'I', 'V', 'R', 'S', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kCheckpointVersion = 2;

  struct Layout {
    Layout() = default;
    explicit Layout(const ScorerConfig& c)
        : channels(c.channels),
          side(c.input_side),
          maps1(c.conv1_maps),
          maps2(c.conv2_maps),
          width(c.embedding_width) {
      w1 = 0;
      b1 = w1 + w1_count();
      w2 = b1 + maps1;
      b2 = w2 + w2_count();
      w3 = b2 + maps2;
      b3 = w3 + w3_count();
      w4 = b3 + width;
      b4 = w4 + w4_count();
      total = b4 + 1;
    }
    std::size_t w1_count() const { return static_cast<std::size_t>(maps1) * channels * 9; }
    std::size_t w2_count() const { return static_cast<std::size_t>(maps2) * maps1 * 9; }
    std::size_t w3_count() const { return static_cast<std::size_t>(width) * maps2; }
    std::size_t w4_count() const { return static_cast<std::size_t>(width); }

    int channels = 1, side = 0, maps1 = 0, maps2 = 0, width = 0;
    std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, w4 = 0, b4 = 0, total = 0;
  };

  struct Activations {
    explicit Activations(const Layout& l)
        : n1(l.side),
          n2(l.side / 2),
          input_pad(static_cast<std::size_t>(l.channels) * (n1 + 2) * (n1 + 2), 0.0),
          pre1(static_cast<std::size_t>(l.maps1) * n1 * n1),
          pool1_pad(static_cast<std::size_t>(l.maps1) * (n2 + 2) * (n2 + 2), 0.0),
          pre2(static_cast<std::size_t>(l.maps2) * n2 * n2),
          gap(l.maps2),
          hidden_pre(l.width),
          hidden(l.width) {}
    int n1, n2;
    std::vector<double> input_pad, pre1, pool1_pad, pre2, gap, hidden_pre, hidden;
    double logit = 0.0, prob = 0.5;
  };

  void require_initialized() const {
    if (params_.empty()) throw StateError("classifier is not initialized");
  }

  static double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  // log(1 + e^z) - y z, stable for large |z|.
  static double bce(double z, Label label) { return bce(z, label == Label::kNok ? 1.0 : 0.0); }
  static double bce(double z, double y) {
    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return softplus - y * z;
  }

  // out[o] = b[o] + sum_i W[o][i] * in_pad[i] (3x3, same padding).
  static void conv3x3(const double* in_pad, int in_maps, int n, const double* w,
                      const double* b, int out_maps, double* out) {
    const int np = n + 2;
    for (int o = 0; o < out_maps; ++o) {
      double* dst_map = out + static_cast<std::size_t>(o) * n * n;
      std::fill_n(dst_map, static_cast<std::size_t>(n) * n, b[o]);
      for (int i = 0; i < in_maps; ++i) {
        const double* src_map = in_pad + static_cast<std::size_t>(i) * np * np;
        const double* k = w + (static_cast<std::size_t>(o) * in_maps + i) * 9;
        for (int y = 0; y < n; ++y) {
          double* __restrict dst = dst_map + static_cast<std::size_t>(y) * n;
          for (int ky = 0; ky < 3; ++ky) {
            const double* __restrict src = src_map + static_cast<std::size_t>(y + ky) * np;
            const double k0 = k[ky * 3], k1 = k[ky * 3 + 1], k2 = k[ky * 3 + 2];
            for (int x = 0; x < n; ++x) {
              dst[x] += k0 * src[x] + k1 * src[x + 1] + k2 * src[x + 2];
            }
          }
        }
      }
    }
  }

  void forward(const std::vector<double>& input, Activations& a) const {
    const Layout& l = layout_;
    const double* p = params_.data();
    const int n1 = a.n1, n2 = a.n2;
    for (int c = 0; c < l.channels; ++c) {
      for (int y = 0; y < n1; ++y) {
        std::copy_n(&input[(static_cast<std::size_t>(c) * n1 + y) * n1], n1,
                    &a.input_pad[(static_cast<std::size_t>(c) * (n1 + 2) + y + 1) * (n1 + 2) + 1]);
      }
    }
    conv3x3(a.input_pad.data(), l.channels, n1, p + l.w1, p + l.b1, l.maps1, a.pre1.data());

    for (int m = 0; m < l.maps1; ++m) {
      const double* src = &a.pre1[static_cast<std::size_t>(m) * n1 * n1];
      double* dst = &a.pool1_pad[static_cast<std::size_t>(m) * (n2 + 2) * (n2 + 2)];
      for (int y = 0; y < n2; ++y) {
        const double* r0 = src + static_cast<std::size_t>(2 * y) * n1;
        const double* r1 = r0 + n1;
        double* d = dst + static_cast<std::size_t>(y + 1) * (n2 + 2) + 1;
        for (int x = 0; x < n2; ++x) {
          d[x] = 0.25 * (std::max(r0[2 * x], 0.0) + std::max(r0[2 * x + 1], 0.0) +
                         std::max(r1[2 * x], 0.0) + std::max(r1[2 * x + 1], 0.0));
        }
      }
    }
    conv3x3(a.pool1_pad.data(), l.maps1, n2, p + l.w2, p + l.b2, l.maps2, a.pre2.data());

    const double inv_area = 1.0 / (static_cast<double>(n2) * n2);
    for (int m = 0; m < l.maps2; ++m) {
      const double* src = &a.pre2[static_cast<std::size_t>(m) * n2 * n2];
      double s = 0.0;
      for (int i = 0; i < n2 * n2; ++i) s += std::max(src[i], 0.0);
      a.gap[m] = s * inv_area;
    }
    double z = p[l.b4];
    for (int h = 0; h < l.width; ++h) {
      double s = p[l.b3 + h];
      const double* row = p + l.w3 + static_cast<std::size_t>(h) * l.maps2;
      for (int m = 0; m < l.maps2; ++m) s += row[m] * a.gap[m];
      a.hidden_pre[h] = s;
      a.hidden[h] = std::max(s, 0.0);
      z += p[l.w4 + h] * a.hidden[h];
    }
    a.logit = z;
    a.prob = sigmoid(z);
  }

  // Accumulates scale * dLoss/dparams into grad.
  void backward(const Activations& a, double target, double scale,
                std::vector<double>& grad) const {
    const Layout& l = layout_;
    const double* p = params_.data();
    double* g = grad.data();
    const int n1 = a.n1, n2 = a.n2;

    const double dz = (a.prob - target) * scale;
    g[l.b4] += dz;
    std::vector<double> dgap(l.maps2, 0.0);
    for (int h = 0; h < l.width; ++h) {
      g[l.w4 + h] += dz * a.hidden[h];
      if (a.hidden_pre[h] <= 0.0) continue;
      const double dh = dz * p[l.w4 + h];
      g[l.b3 + h] += dh;
      double* grow = g + l.w3 + static_cast<std::size_t>(h) * l.maps2;
      const double* prow = p + l.w3 + static_cast<std::size_t>(h) * l.maps2;
      for (int m = 0; m < l.maps2; ++m) {
        grow[m] += dh * a.gap[m];
        dgap[m] += dh * prow[m];
      }
    }

    // Second convolution: d(pre2) is dgap / area where pre2 > 0.
    const int np2 = n2 + 2;
    const double inv_area = 1.0 / (static_cast<double>(n2) * n2);
    std::vector<double> dpre2_pad(static_cast<std::size_t>(l.maps2) * np2 * np2, 0.0);
    for (int o = 0; o < l.maps2; ++o) {
      const double d = dgap[o] * inv_area;
      if (d == 0.0) continue;
      const double* pre = &a.pre2[static_cast<std::size_t>(o) * n2 * n2];
      double* dp = &dpre2_pad[static_cast<std::size_t>(o) * np2 * np2];
      double bias_grad = 0.0;
      for (int y = 0; y < n2; ++y) {
        for (int x = 0; x < n2; ++x) {
          const double v = pre[y * n2 + x] > 0.0 ? d : 0.0;
          dp[(y + 1) * np2 + x + 1] = v;
          bias_grad += v;
        }
      }
      g[l.b2 + o] += bias_grad;
      for (int i = 0; i < l.maps1; ++i) {
        const double* src_map = &a.pool1_pad[static_cast<std::size_t>(i) * np2 * np2];
        const std::size_t kidx = (static_cast<std::size_t>(o) * l.maps1 + i) * 9;
        kernel_gradient(dp, src_map, n2, g + l.w2 + kidx);
      }
    }
    // Gradient w.r.t. the pooled first stage is a same-padded convolution of
    // d(pre2) with the flipped, transposed kernels.
    std::vector<double> flipped(l.w2_count());
    for (int o = 0; o < l.maps2; ++o) {
      for (int i = 0; i < l.maps1; ++i) {
        for (int k = 0; k < 9; ++k) {
          flipped[(static_cast<std::size_t>(i) * l.maps2 + o) * 9 + k] =
              p[l.w2 + (static_cast<std::size_t>(o) * l.maps1 + i) * 9 + (8 - k)];
        }
      }
    }
    const std::vector<double> zero_bias(l.maps1, 0.0);
    std::vector<double> dpool1(static_cast<std::size_t>(l.maps1) * n2 * n2);
    conv3x3(dpre2_pad.data(), l.maps2, n2, flipped.data(), zero_bias.data(), l.maps1,
            dpool1.data());

    // Pool backward and first convolution.
    const int np1 = n1 + 2;
    std::vector<double> dpre1_pad(static_cast<std::size_t>(np1) * np1, 0.0);
    for (int o = 0; o < l.maps1; ++o) {
      const double* pre = &a.pre1[static_cast<std::size_t>(o) * n1 * n1];
      const double* dpool = &dpool1[static_cast<std::size_t>(o) * n2 * n2];
      double bias_grad = 0.0;
      bool any = false;
      for (int y = 0; y < n1; ++y) {
        const double* drow = dpool + static_cast<std::size_t>(y / 2) * n2;
        for (int x = 0; x < n1; ++x) {
          const std::size_t idx = static_cast<std::size_t>(y) * n1 + x;
          const double dv = pre[idx] > 0.0 ? 0.25 * drow[x / 2] : 0.0;
          dpre1_pad[static_cast<std::size_t>(y + 1) * np1 + x + 1] = dv;
          bias_grad += dv;
          any = any || dv != 0.0;
        }
      }
      g[l.b1 + o] += bias_grad;
      if (!any) continue;
      for (int i = 0; i < l.channels; ++i) {
        const double* src_map = &a.input_pad[static_cast<std::size_t>(i) * np1 * np1];
        kernel_gradient(dpre1_pad.data(), src_map, n1,
                        g + l.w1 + (static_cast<std::size_t>(o) * l.channels + i) * 9);
      }
    }
  }

  // gk[ky][kx] += sum_{y,x} d[y][x] * src[y+ky][x+kx], where both maps are
  // stored with a one-pixel zero border. Treating the padded maps as flat
  // arrays turns each tap into one long dot product; the zero border columns
  // contribute nothing. Eight fixed partial sums keep the order deterministic
  // while letting the loop vectorize.
  static void kernel_gradient(const double* d_pad, const double* src_pad, int n, double* gk) {
    const int np = n + 2;
    const std::size_t len = static_cast<std::size_t>(n) * np - 2;
    const double* __restrict d = d_pad + np + 1;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* __restrict src = src_pad + static_cast<std::size_t>(ky) * np + kx;
        double part[8] = {0, 0, 0, 0, 0, 0, 0, 0};
        std::size_t t = 0;
        for (; t + 8 <= len; t += 8) {
          for (int j = 0; j < 8; ++j) part[j] += d[t + j] * src[t + j];
        }
        double sum = ((part[0] + part[1]) + (part[2] + part[3])) +
                     ((part[4] + part[5]) + (part[6] + part[7]));
        for (; t < len; ++t) sum += d[t] * src[t];
        gk[ky * 3 + kx] += sum;
      }
    }
  }

  static void put_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static void put_u64(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  static std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(in.get())) << (8 * i);
    return v;
  }
  static std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in.get())) << (8 * i);
    return v;
  }

  ScorerConfig config_;
  Layout layout_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

namespace detail {

// Bernoulli(0.5) grid of l x l cells, upsampled and shifted by a random
// offset within one tile (no shift when l does not divide the side).
inline Mask random_occlusion(int side, int l, Rng& rng) {
  l = std::min(l, side);
  const bool shift = side % l == 0;
  const int tile = side / l;
  LowResGrid grid(shift ? l + 1 : l);
  for (auto& cell : grid.values()) cell = rng.bernoulli(0.5) ? 1 : 0;
  if (!shift) return upsample_bilinear(grid, side);
  const Mask big = upsample_bilinear(grid, side + tile);
  const int dr = rng.uniform_int(0, tile - 1), dc = rng.uniform_int(0, tile - 1);
  Mask out(side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) out.at(r, c) = big.at(r + dr, c + dc);
  }
  return out;
}

}  // namespace detail

// Mini-batch SGD with momentum on mean binary cross-entropy, starting from the
// scorer's current parameters. With a validation set, stops after `patience`
// epochs without strict improvement of validation loss and restores the best
// parameters. Iteration order is fixed by config.seed.
inline TrainLog train(ConvScorer& scorer, std::span<const Sample> train_set,
                      std::span<const Sample> validation_set, const TrainConfig& config) {
  config.validate();
  scorer.require_initialized();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  TrainLog log;
  {
    const auto nok = std::count_if(train_set.begin(), train_set.end(),
                                   [](const Sample& s) { return s.label == Label::kNok; });
    if (nok == 0 || nok == static_cast<std::ptrdiff_t>(train_set.size())) {
      log.warnings.push_back("training set contains a single class");
      warn(log.warnings.back());
    }
  }

  struct Prepared {
    std::vector<double> tensor;
    double target;
  };
  auto prepare = [&](std::span<const Sample> set) {
    std::vector<Prepared> out;
    out.reserve(set.size());
    for (const auto& s : set) {
      out.push_back({scorer.preprocess(*s.image), s.label == Label::kNok ? 1.0 : 0.0});
    }
    return out;
  };
  const auto train_data = prepare(train_set);
  const auto val_data = prepare(validation_set);

  ConvScorer::Activations act(scorer.layout_);
  auto evaluate = [&](const std::vector<Prepared>& data) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (const auto& d : data) {
      scorer.forward(d.tensor, act);
      loss += ConvScorer::bce(act.logit, d.target > 0.5 ? Label::kNok : Label::kOk);
      correct += (act.prob >= 0.5) == (d.target > 0.5);
    }
    const double n = static_cast<double>(data.size());
    return std::pair<double, double>{loss / n, static_cast<double>(correct) / n};
  };

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(scorer.params_.size(), 0.0);
  std::vector<double> grad(scorer.params_.size());
  const bool use_validation = !val_data.empty();
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const auto& d = train_data[order[i]];
        double target = d.target;
        const Sample& src = train_set[order[i]];
        if (config.occlusion_augmentation > 0.0 && (target < 0.5 || src.evidence) &&
            rng.bernoulli(config.occlusion_augmentation)) {
          const Image& image = *src.image;
          const Mask m = detail::random_occlusion(image.side(), config.occlusion_cells, rng);
          if (target > 0.5) {
            double visible = 0.0, total = 0.0;
            for (std::size_t j = 0; j < m.size(); ++j) {
              if ((*src.evidence)[j]) {
                visible += m[j];
                total += 1.0;
              }
            }
            target = total > 0 ? visible / total : 0.0;
          }
          scorer.forward(scorer.preprocess(apply_mask(image, m)), act);
        } else {
          scorer.forward(d.tensor, act);
        }
        epoch_loss += ConvScorer::bce(act.logit, target);
        correct += (act.prob >= 0.5) == (target > 0.5);
        scorer.backward(act, target, scale, grad);
      }
      for (std::size_t j = 0; j < grad.size(); ++j) {
        velocity[j] = config.momentum * velocity[j] + grad[j];
        scorer.params_[j] -= config.learning_rate * velocity[j];
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(order.size());
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (use_validation) {
      const auto [vl, va] = evaluate(val_data);
      entry.validation_loss = vl;
      entry.validation_accuracy = va;
      if (vl < best_loss) {
        best_loss = vl;
        best_params = scorer.params_;
        log.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        log.epochs.push_back(entry);
        log.early_stopped = true;
        break;
      }
    }
    log.epochs.push_back(entry);
  }
  if (use_validation && !best_params.empty()) scorer.params_ = std::move(best_params);
  ++scorer.version_;
  return log;
}

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::vector<std::size_t> coordinates;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Compares analytic gradients with central differences at `coordinates`
// parameter indices drawn from `seed`. Relative error is
// |a - n| / max(|a|, |n|, 1e-6); the floor keeps rounding noise on
// near-zero gradients from dominating.
inline GradientCheckResult gradient_check(const ConvScorer& scorer, const Image& image,
                                          Label label, std::uint64_t seed,
                                          int coordinates = 20, double step = 1e-4) {
  GradientCheckResult result;
  std::vector<double> grad;
  scorer.loss_and_gradient(image, label, grad);
  ConvScorer probe = scorer;
  std::vector<double> params(scorer.parameters().begin(), scorer.parameters().end());
  Rng rng(seed);
  for (int i = 0; i < coordinates; ++i) {
    const std::size_t j = rng.below(params.size());
    const double saved = params[j];
    params[j] = saved + step;
    probe.set_parameters(params);
    const double up = probe.loss(image, label);
    params[j] = saved - step;
    probe.set_parameters(params);
    const double down = probe.loss(image, label);
    params[j] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(grad[j]), std::abs(numeric), 1e-6});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(grad[j] - numeric) / denom);
    result.coordinates.push_back(j);
    result.analytic.push_back(grad[j]);
    result.numeric.push_back(numeric);
  }
  return result;
}

}  // namespace invrise

#endif  // INVRISE_CLASSIFIER_HPP_
