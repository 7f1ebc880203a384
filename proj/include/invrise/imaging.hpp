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

// Square pixel grids and the handful of geometric operations the rest of the
// workbench needs: bilinear up/down-sampling, masking, zooming, dihedral
// augmentations and defect compositing.
//
// Coordinates are (row, col) with row 0 at the top. Images store channels
// interleaved, row-major.

#ifndef INVRISE_IMAGING_HPP_
#define INVRISE_IMAGING_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "invrise/common.hpp"

namespace invrise {

// A square side x side grid of T. Tag makes otherwise identical layouts
// (e.g. a Bernoulli grid and a binary mask) distinct types.
template <typename T, typename Tag>
class SquareGrid {
 public:
  using value_type = T;

  SquareGrid() = default;
  explicit SquareGrid(int side, T fill = T{})
      : side_(checked_side(side)),
        values_(static_cast<std::size_t>(side) * side, fill) {}
  SquareGrid(int side, std::vector<T> values)
      : side_(checked_side(side)), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(side) * side) {
      throw std::invalid_argument("SquareGrid: value count does not match side");
    }
  }

  int side() const { return side_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& at(int row, int col) { return values_[index(row, col)]; }
  const T& at(int row, int col) const { return values_[index(row, col)]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool operator==(const SquareGrid&) const = default;

 private:
  static int checked_side(int side) {
    if (side < 0) throw std::invalid_argument("SquareGrid: negative side");
    return side;
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * side_ + col;
  }

  int side_ = 0;
  std::vector<T> values_;
};

struct LowResGridTag {};
struct MaskTag {};
struct BinaryMaskTag {};

// l x l Bernoulli cells in {0, 1}.
using LowResGrid = SquareGrid<std::uint8_t, LowResGridTag>;
// Real-valued mask in [0, 1], the bilinear upsampling of one LowResGrid.
using Mask = SquareGrid<double, MaskTag>;
// {0, 1} pixel mask: expert annotations and binarized saliency.
using BinaryMask = SquareGrid<std::uint8_t, BinaryMaskTag>;

inline std::size_t count_ones(const BinaryMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(),
                    [](std::uint8_t v) { return v != 0; }));
}

// Square image with 1 or 3 channels; every value in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int side, int channels, double fill = 0.0)
      : side_(side), channels_(channels) {
    validate_shape();
    if (fill < 0.0 || fill > 1.0) throw std::invalid_argument("Image: fill outside [0,1]");
    pixels_.assign(static_cast<std::size_t>(side) * side * channels, fill);
  }
  Image(int side, int channels, std::vector<double> pixels)
      : side_(side), channels_(channels), pixels_(std::move(pixels)) {
    validate_shape();
    if (pixels_.size() != static_cast<std::size_t>(side) * side * channels) {
      throw std::invalid_argument("Image: pixel count does not match shape");
    }
    for (double v : pixels_) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("Image: pixel value outside [0,1]");
      }
    }
  }

  int side() const { return side_; }
  int width() const { return side_; }
  int height() const { return side_; }
  int channels() const { return channels_; }
  bool empty() const { return pixels_.empty(); }

  double& at(int row, int col, int channel = 0) {
    return pixels_[(static_cast<std::size_t>(row) * side_ + col) * channels_ + channel];
  }
  double at(int row, int col, int channel = 0) const {
    return pixels_[(static_cast<std::size_t>(row) * side_ + col) * channels_ + channel];
  }

  std::span<double> pixels() { return pixels_; }
  std::span<const double> pixels() const { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  void validate_shape() const {
    if (side_ < 1) throw std::invalid_argument("Image: side must be positive");
    if (channels_ != 1 && channels_ != 3) {
      throw std::invalid_argument("Image: channels must be 1 or 3");
    }
  }

  int side_ = 0;
  int channels_ = 1;
  std::vector<double> pixels_;
};

// Half-open pixel rectangle [row0, row1) x [col0, col1).
struct Box {
  int row0 = 0;
  int col0 = 0;
  int row1 = 0;
  int col1 = 0;

  int height() const { return row1 - row0; }
  int width() const { return col1 - col0; }
  bool degenerate() const { return row1 <= row0 || col1 <= col0; }
  bool operator==(const Box&) const = default;
};

inline Box full_frame(int side) { return Box{0, 0, side, side}; }

// Tight bounding box of the mask support, or nullopt for an empty mask.
inline std::optional<Box> bounding_box(const BinaryMask& mask) {
  Box box{mask.side(), mask.side(), -1, -1};
  bool any = false;
  for (int r = 0; r < mask.side(); ++r) {
    for (int c = 0; c < mask.side(); ++c) {
      if (!mask.at(r, c)) continue;
      any = true;
      box.row0 = std::min(box.row0, r);
      box.col0 = std::min(box.col0, c);
      box.row1 = std::max(box.row1, r + 1);
      box.col1 = std::max(box.col1, c + 1);
    }
  }
  if (!any) return std::nullopt;
  return box;
}

// ---------------------------------------------------------------------------
// Bilinear kernel. Coordinates are in pixel-index units (pixel (r, c) sits at
// (r, c)); samples outside the grid clamp to the nearest edge, which is the
// same as replicating border pixels.

namespace detail {

struct BilinearTap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline BilinearTap bilinear_tap(double t, int n) {
  if (n == 1 || t <= 0.0) return {0, 0, 0.0};
  if (t >= n - 1) return {n - 1, n - 1, 0.0};
  const int i0 = static_cast<int>(std::floor(t));
  const double frac = t - i0;
  if (frac == 0.0) return {i0, i0, 0.0};
  return {i0, i0 + 1, frac};
}

// Accessor(row, col) -> double over an n x n grid.
template <typename Accessor>
double sample_bilinear(const Accessor& at, int n, double row, double col) {
  const BilinearTap tr = bilinear_tap(row, n);
  const BilinearTap tc = bilinear_tap(col, n);
  const double top = (1.0 - tc.w1) * at(tr.i0, tc.i0) + tc.w1 * at(tr.i0, tc.i1);
  if (tr.w1 == 0.0) return top;
  const double bottom = (1.0 - tc.w1) * at(tr.i1, tc.i0) + tc.w1 * at(tr.i1, tc.i1);
  return (1.0 - tr.w1) * top + tr.w1 * bottom;
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

// Position of output pixel `o` in cell units when an l-cell grid is stretched
// over `side` pixels. Cell j's center lands on pixel index j*T + floor(T/2)
// (T = side / l), so whenever the tile size is an integer there is a pixel
// that coincides with each cell center and takes that cell's value verbatim.
inline double cell_coordinate(int o, int l, int side) {
  const double tile = static_cast<double>(side) / l;
  return (o - std::floor(tile / 2.0)) / tile;
}

// Bilinear upsampling of a Bernoulli grid to a side x side mask, cells placed
// at tile centers, border pixels replicated from the outermost cells.
inline Mask upsample_bilinear(const LowResGrid& grid, int side) {
  const int l = grid.side();
  if (l < 1) throw std::invalid_argument("upsample_bilinear: empty grid");
  if (l > side) throw std::invalid_argument("upsample_bilinear: grid larger than output side");
  std::vector<detail::BilinearTap> taps(side);
  for (int o = 0; o < side; ++o) taps[o] = detail::bilinear_tap(cell_coordinate(o, l, side), l);
  Mask out(side);
  for (int r = 0; r < side; ++r) {
    const auto& tr = taps[r];
    for (int c = 0; c < side; ++c) {
      const auto& tc = taps[c];
      const double top = (1.0 - tc.w1) * grid.at(tr.i0, tc.i0) + tc.w1 * grid.at(tr.i0, tc.i1);
      const double bottom =
          (1.0 - tc.w1) * grid.at(tr.i1, tc.i0) + tc.w1 * grid.at(tr.i1, tc.i1);
      out.at(r, c) = (1.0 - tr.w1) * top + tr.w1 * bottom;
    }
  }
  return out;
}

// Resamples an image to a new side with the standard half-pixel alignment
// (pixel centers map to pixel centers). Downscaling by 2 averages 2x2 blocks.
inline Image resize_bilinear(const Image& image, int new_side) {
  if (new_side < 1) throw std::invalid_argument("resize_bilinear: side must be positive");
  if (new_side == image.side()) return image;
  const int n = image.side();
  const double ratio = static_cast<double>(n) / new_side;
  Image out(new_side, image.channels());
  for (int ch = 0; ch < image.channels(); ++ch) {
    auto at = [&](int r, int c) { return image.at(r, c, ch); };
    for (int r = 0; r < new_side; ++r) {
      const double sr = (r + 0.5) * ratio - 0.5;
      for (int c = 0; c < new_side; ++c) {
        const double sc = (c + 0.5) * ratio - 0.5;
        out.at(r, c, ch) = detail::clamp01(detail::sample_bilinear(at, n, sr, sc));
      }
    }
  }
  return out;
}

// I ⊙ m, per channel.
inline Image apply_mask(const Image& image, const Mask& mask) {
  if (image.side() != mask.side()) throw std::invalid_argument("apply_mask: size mismatch");
  Image out = image;
  auto px = out.pixels();
  const int ch = image.channels();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    for (int c = 0; c < ch; ++c) px[i * ch + c] *= mask[i];
  }
  return out;
}

// Zoom relative to a region of interest.
//
// scale > 1: crop a window of side/scale pixels centered on the box (shifted
// to stay inside the frame) and resample it to the full side.
// scale < 1: shrink the whole image about the box center; uncovered area is
// filled by replicating border pixels.
inline Image zoom_region(const Image& image, const Box& box, double scale) {
  const int n = image.side();
  if (box.degenerate()) throw std::invalid_argument("zoom_region: degenerate box");
  if (box.row0 < 0 || box.col0 < 0 || box.row1 > n || box.col1 > n) {
    throw std::invalid_argument("zoom_region: box out of bounds");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("zoom_region: scale must be positive");
  if (scale == 1.0) return image;

  double center_r = (box.row0 + box.row1 - 1) / 2.0;
  double center_c = (box.col0 + box.col1 - 1) / 2.0;
  const double mid = (n - 1) / 2.0;
  const bool zoom_in = scale > 1.0;
  if (zoom_in) {
    const double half = mid / scale;
    center_r = std::clamp(center_r, half, (n - 1) - half);
    center_c = std::clamp(center_c, half, (n - 1) - half);
  }
  auto source = [&](int o, double center) {
    return zoom_in ? center + (o - mid) / scale : center + (o - center) / scale;
  };

  Image out(n, image.channels());
  for (int ch = 0; ch < image.channels(); ++ch) {
    auto at = [&](int r, int c) { return image.at(r, c, ch); };
    for (int r = 0; r < n; ++r) {
      const double sr = source(r, center_r);
      for (int c = 0; c < n; ++c) {
        out.at(r, c, ch) = detail::clamp01(detail::sample_bilinear(at, n, sr, source(c, center_c)));
      }
    }
  }
  return out;
}

enum class Augmentation { kFlipH, kFlipV, kRotate90, kRotate180, kRotate270 };

inline constexpr std::array<Augmentation, 5> kAllAugmentations = {
    Augmentation::kFlipH, Augmentation::kFlipV, Augmentation::kRotate90,
    Augmentation::kRotate180, Augmentation::kRotate270};

inline std::string_view to_string(Augmentation op) {
  switch (op) {
    case Augmentation::kFlipH: return "flip-h";
    case Augmentation::kFlipV: return "flip-v";
    case Augmentation::kRotate90: return "rotate-90";
    case Augmentation::kRotate180: return "rotate-180";
    case Augmentation::kRotate270: return "rotate-270";
  }
  return "?";
}

namespace detail {
// Source coordinate for output (r, c). Rotations are clockwise.
inline std::pair<int, int> dihedral_source(Augmentation op, int n, int r, int c) {
  switch (op) {
    case Augmentation::kFlipH: return {r, n - 1 - c};
    case Augmentation::kFlipV: return {n - 1 - r, c};
    case Augmentation::kRotate90: return {n - 1 - c, r};
    case Augmentation::kRotate180: return {n - 1 - r, n - 1 - c};
    case Augmentation::kRotate270: return {c, n - 1 - r};
  }
  return {r, c};
}
}  // namespace detail

inline Image augment(const Image& image, Augmentation op) {
  const int n = image.side();
  Image out(n, image.channels());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const auto [sr, sc] = detail::dihedral_source(op, n, r, c);
      for (int ch = 0; ch < image.channels(); ++ch) out.at(r, c, ch) = image.at(sr, sc, ch);
    }
  }
  return out;
}

template <typename T, typename Tag>
SquareGrid<T, Tag> augment(const SquareGrid<T, Tag>& grid, Augmentation op) {
  const int n = grid.side();
  SquareGrid<T, Tag> out(n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const auto [sr, sc] = detail::dihedral_source(op, n, r, c);
      out.at(r, c) = grid.at(sr, sc);
    }
  }
  return out;
}

// Square crop with top-left corner (row, col).
inline Image crop(const Image& image, int row, int col, int side) {
  if (row < 0 || col < 0 || side < 1 || row + side > image.side() || col + side > image.side()) {
    throw std::invalid_argument("crop: window out of bounds");
  }
  Image out(side, image.channels());
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      for (int ch = 0; ch < image.channels(); ++ch) {
        out.at(r, c, ch) = image.at(row + r, col + c, ch);
      }
    }
  }
  return out;
}

inline BinaryMask crop(const BinaryMask& mask, int row, int col, int side) {
  if (row < 0 || col < 0 || side < 1 || row + side > mask.side() || col + side > mask.side()) {
    throw std::invalid_argument("crop: window out of bounds");
  }
  BinaryMask out(side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) out.at(r, c) = mask.at(row + r, col + c);
  }
  return out;
}

struct Offset {
  int row = 0;
  int col = 0;
};

// An image together with the defect mask it carries as ground truth.
struct AnnotatedImage {
  Image image;
  BinaryMask mask;
};

// Pastes the masked pixels of `patch` onto `background` with the patch's
// top-left corner at `offset`. The result's mask is the patch mask translated
// into background coordinates.
inline AnnotatedImage composite(const Image& patch, const BinaryMask& patch_mask,
                                const Image& background, Offset offset) {
  if (patch.side() != patch_mask.side()) {
    throw std::invalid_argument("composite: patch and mask differ in size");
  }
  if (patch.channels() != background.channels()) {
    throw std::invalid_argument("composite: channel mismatch");
  }
  if (offset.row < 0 || offset.col < 0 || offset.row + patch.side() > background.side() ||
      offset.col + patch.side() > background.side()) {
    throw std::invalid_argument("composite: patch does not fit at offset");
  }
  AnnotatedImage out{background, BinaryMask(background.side())};
  for (int r = 0; r < patch.side(); ++r) {
    for (int c = 0; c < patch.side(); ++c) {
      if (!patch_mask.at(r, c)) continue;
      const int br = offset.row + r;
      const int bc = offset.col + c;
      for (int ch = 0; ch < patch.channels(); ++ch) out.image.at(br, bc, ch) = patch.at(r, c, ch);
      out.mask.at(br, bc) = 1;
    }
  }
  return out;
}

// Converts between 1 and 3 channels (mean / replicate).
inline Image convert_channels(const Image& image, int channels) {
  if (image.channels() == channels) return image;
  Image out(image.side(), channels);
  const int n = image.side();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (channels == 1) {
        out.at(r, c) = (image.at(r, c, 0) + image.at(r, c, 1) + image.at(r, c, 2)) / 3.0;
      } else {
        for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = image.at(r, c);
      }
    }
  }
  return out;
}

}  // namespace invrise

#endif  // INVRISE_IMAGING_HPP_
