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

// Synthetic welding-plate dataset.
//
// Each image is a grey plate crossed by a bright horizontal seam with a
// periodic scallop texture. NOK instances perturb the seam in one of five
// ways and carry a mask of exactly the perturbed pixels; plates without a
// seam count as NOK with the seam's expected band as their mask.
//
// The base plate and the defect are drawn from independent streams of the
// instance seed, so an OK and a NOK render with the same seed differ exactly
// on the defect mask. Pixel values are multiples of 1/255, which makes PNG
// round trips lossless.

#ifndef INVRISE_DATASET_HPP_
#define INVRISE_DATASET_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "invrise/common.hpp"
#include "invrise/imaging.hpp"
#include "invrise/png_io.hpp"
#include "json.hpp"

namespace invrise {

enum class DefectKind { kScratch, kPore, kGap, kIrregularScale, kMissingSeam };

inline std::string_view to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::kScratch: return "scratch";
    case DefectKind::kPore: return "pore";
    case DefectKind::kGap: return "gap";
    case DefectKind::kIrregularScale: return "irregular-scale";
    case DefectKind::kMissingSeam: return "missing-seam";
  }
  return "?";
}

inline DefectKind parse_defect_kind(std::string_view text) {
  for (auto kind : {DefectKind::kScratch, DefectKind::kPore, DefectKind::kGap,
                    DefectKind::kIrregularScale, DefectKind::kMissingSeam}) {
    if (to_string(kind) == text) return kind;
  }
  throw std::invalid_argument("unknown defect kind: " + std::string(text));
}

// What to render: nullopt is an OK seam, otherwise the defect to plant.
// A plate without a seam is DefectKind::kMissingSeam.
using ClassSpec = std::optional<DefectKind>;

struct LabeledInstance {
  std::string id;
  Image image;
  Label label = Label::kOk;
  std::optional<BinaryMask> defect_mask;
  std::optional<DefectKind> defect_kind;
  std::uint64_t generator_seed = 0;

  bool operator==(const LabeledInstance&) const = default;
};

namespace detail {

inline double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

inline double distance_to_segment(double py, double px, double ay, double ax, double by,
                                  double bx) {
  const double dy = by - ay, dx = bx - ax;
  const double len2 = dy * dy + dx * dx;
  double t = len2 > 0.0 ? ((py - ay) * dy + (px - ax) * dx) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qy = ay + t * dy - py, qx = ax + t * dx - px;
  return std::sqrt(qy * qy + qx * qx);
}

// Everything about a plate that does not depend on the class.
struct Plate {
  int side = 0;
  int band_top = 0;     // first band row
  int band_bottom = 0;  // last band row (inclusive)
  std::vector<double> background;  // plate without seam
  std::vector<double> seam;        // OK seam texture (valid inside band rows)
  std::vector<double> noise;       // per-pixel noise in [-1, 1]

  bool in_band(int r) const { return r >= band_top && r <= band_bottom; }
};

inline Plate render_plate(int side, Rng& rng) {
  Plate plate;
  plate.side = side;
  const std::size_t n = static_cast<std::size_t>(side) * side;
  const double base = rng.uniform(0.27, 0.33);
  const double f1 = rng.uniform(0.5, 1.5), f2 = rng.uniform(0.5, 1.5);
  const double ph1 = rng.uniform(0.0, 2 * std::numbers::pi), ph2 = rng.uniform(0.0, 2 * std::numbers::pi);
  const int center = side / 2 + rng.uniform_int(-side / 16, side / 16);
  const int half = std::max(1, static_cast<int>(std::lround(0.11 * side)));
  plate.band_top = std::max(0, center - half);
  plate.band_bottom = std::min(side - 1, center + half);
  const double period = side / 8.0 * rng.uniform(0.9, 1.1);
  const double curvature = rng.uniform(0.3, 0.6);
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  plate.noise.resize(n);
  for (auto& v : plate.noise) v = rng.uniform(-1.0, 1.0);
  plate.background.resize(n);
  plate.seam.resize(n);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * side + c;
      const double wave = 0.02 * std::sin(2 * std::numbers::pi * f1 * r / side + ph1) +
                          0.02 * std::sin(2 * std::numbers::pi * f2 * c / side + ph2);
      plate.background[i] = base + wave + 0.02 * plate.noise[i];
      const double rel = (r - center) / static_cast<double>(half);
      const double scallop =
          0.5 + 0.5 * std::cos(2 * std::numbers::pi * (c + curvature * rel * rel * period) / period + phase);
      plate.seam[i] = 0.62 + 0.14 * scallop + 0.02 * plate.noise[i];
    }
  }
  return plate;
}

}  // namespace detail

// Deterministic render of one plate. `id` defaults to the hex seed.
inline LabeledInstance generate_instance(std::uint64_t seed, ClassSpec spec, int side = 64,
                                         std::string id = {}) {
  if (side < 16) throw std::invalid_argument("generate_instance: side must be >= 16");
  Rng base_rng(derive_seed(seed, 1));
  Rng defect_rng(derive_seed(seed, 2));
  const detail::Plate plate = detail::render_plate(side, base_rng);
  const double u = side / 64.0;
  const std::size_t n = static_cast<std::size_t>(side) * side;

  std::vector<double> pixels(n);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * side + c;
      pixels[i] = plate.in_band(r) ? plate.seam[i] : plate.background[i];
    }
  }
  BinaryMask mask(side);

  if (spec) {
    switch (*spec) {
      case DefectKind::kScratch: {
        const double margin = 3.0 * u;
        const double top = plate.band_top - margin, bottom = plate.band_bottom + margin;
        const double x0 = defect_rng.uniform(0.2, 0.8) * side;
        const double x2 = std::clamp(x0 + defect_rng.uniform(-0.15, 0.15) * side, 2.0, side - 3.0);
        const double x1 = (x0 + x2) / 2 + defect_rng.uniform(-0.06, 0.06) * side;
        const double y1 = (top + bottom) / 2 + defect_rng.uniform(-2.0, 2.0) * u;
        const double radius = 2.3 * u;
        for (int r = 0; r < side; ++r) {
          for (int c = 0; c < side; ++c) {
            const double d = std::min(detail::distance_to_segment(r, c, top, x0, y1, x1),
                                      detail::distance_to_segment(r, c, y1, x1, bottom, x2));
            if (d > radius) continue;
            const std::size_t i = static_cast<std::size_t>(r) * side + c;
            pixels[i] = 0.10 + 0.03 * plate.noise[i];
            mask[i] = 1;
          }
        }
        break;
      }
      case DefectKind::kPore: {
        // A cluster of one or two blobs around a common center.
        const int count = defect_rng.uniform_int(1, 2);
        const double band_mid = (plate.band_top + plate.band_bottom) / 2.0;
        const double band_half = (plate.band_bottom - plate.band_top) / 2.0;
        const double cy0 = band_mid + defect_rng.uniform(-0.3, 0.3) * band_half;
        const double cx0 = defect_rng.uniform(0.15, 0.85) * side;
        for (int k = 0; k < count; ++k) {
          const double cy = cy0 + (k == 0 ? 0.0 : defect_rng.uniform(-2.0, 2.0) * u);
          const double cx = cx0 + (k == 0 ? 0.0 : defect_rng.uniform(4.0, 7.0) * u);
          const double ry = defect_rng.uniform(3.0, 4.5) * u;
          const double rx = defect_rng.uniform(3.5, 5.0) * u;
          for (int r = 0; r < side; ++r) {
            for (int c = 0; c < side; ++c) {
              const double dy = (r - cy) / ry, dx = (c - cx) / rx;
              if (dy * dy + dx * dx > 1.0) continue;
              const std::size_t i = static_cast<std::size_t>(r) * side + c;
              pixels[i] = 0.12 + 0.03 * plate.noise[i];
              mask[i] = 1;
            }
          }
        }
        break;
      }
      case DefectKind::kGap: {
        const int width = defect_rng.uniform_int(side / 8, side / 5);
        const int start = defect_rng.uniform_int(side / 10, side - side / 10 - width);
        for (int r = plate.band_top; r <= plate.band_bottom; ++r) {
          for (int c = start; c < start + width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * side + c;
            pixels[i] = plate.background[i];
            mask[i] = 1;
          }
        }
        break;
      }
      case DefectKind::kIrregularScale: {
        const int width = defect_rng.uniform_int(side / 5, static_cast<int>(side / 3.5));
        const int start = defect_rng.uniform_int(side / 10, side - side / 10 - width);
        const double period = side / 8.0 * defect_rng.uniform(0.35, 0.55);
        const double tilt = defect_rng.uniform(-1.0, 1.0);
        for (int r = plate.band_top; r <= plate.band_bottom; ++r) {
          for (int c = start; c < start + width; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * side + c;
            const double scallop =
                0.5 + 0.5 * std::cos(2 * std::numbers::pi * (c + tilt * (r - plate.band_top)) / period);
            pixels[i] = 0.38 + 0.14 * scallop + 0.02 * plate.noise[i];
            mask[i] = 1;
          }
        }
        break;
      }
      case DefectKind::kMissingSeam: {
        for (int r = plate.band_top; r <= plate.band_bottom; ++r) {
          for (int c = 0; c < side; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * side + c;
            pixels[i] = plate.background[i];
            mask[i] = 1;
          }
        }
        break;
      }
    }
  }

  for (auto& v : pixels) v = detail::quantize(v);
  LabeledInstance out;
  out.id = id.empty() ? "x" + std::to_string(seed) : std::move(id);
  out.image = Image(side, 1, std::move(pixels));
  out.generator_seed = seed;
  if (spec) {
    out.label = Label::kNok;
    out.defect_mask = std::move(mask);
    out.defect_kind = *spec;
  }
  return out;
}

// Metallic texture used as refutation background.
inline Image generate_background(std::uint64_t seed, int side = 64) {
  Rng rng(derive_seed(seed, 3));
  const double base = rng.uniform(0.38, 0.5);
  const double freq = rng.uniform(6.0, 14.0);
  const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
  const double slope = rng.uniform(-0.3, 0.3);
  std::vector<double> px(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      const double streak = 0.04 * std::sin(2 * std::numbers::pi * freq * (r + slope * c) / side + phase);
      px[static_cast<std::size_t>(r) * side + c] =
          detail::quantize(base + streak + rng.uniform(-0.05, 0.05));
    }
  }
  return Image(side, 1, std::move(px));
}

struct DatasetConfig {
  int ok = 139;
  int no_seam = 110;
  int nok = 164;  // seams with defects, kinds cycled
  std::uint64_t seed = 0;
  int side = 64;
};

// Instance order: OK plates, then plates without seam, then defective seams
// cycling scratch / pore / gap / irregular-scale. Instance i uses seed
// derive_seed(master, i) and id "d<master>-<i>".
inline std::vector<LabeledInstance> generate_dataset(const DatasetConfig& config) {
  if (config.ok < 0 || config.no_seam < 0 || config.nok < 0) {
    throw std::invalid_argument("generate_dataset: counts must be >= 0");
  }
  static constexpr std::array<DefectKind, 4> kSeamDefects = {
      DefectKind::kScratch, DefectKind::kPore, DefectKind::kGap, DefectKind::kIrregularScale};
  std::vector<LabeledInstance> out;
  const int total = config.ok + config.no_seam + config.nok;
  out.reserve(total);
  for (int i = 0; i < total; ++i) {
    ClassSpec spec;
    if (i >= config.ok + config.no_seam) {
      spec = kSeamDefects[(i - config.ok - config.no_seam) % kSeamDefects.size()];
    } else if (i >= config.ok) {
      spec = DefectKind::kMissingSeam;
    }
    char id[48];
    std::snprintf(id, sizeof(id), "d%llu-%04d", static_cast<unsigned long long>(config.seed), i);
    out.push_back(generate_instance(derive_seed(config.seed, static_cast<std::uint64_t>(i)), spec,
                                    config.side, id));
  }
  return out;
}

struct DatasetSplits {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::vector<std::string> interactive;

  bool operator==(const DatasetSplits&) const = default;
};

// Stratified split. Each class is shuffled, the classes are merged so every
// prefix holds them in proportion, and the merged sequence is cut into four
// blocks sized by largest remainder. Any contiguous block then matches the
// global class proportions within one instance.
inline DatasetSplits split_dataset(const std::vector<LabeledInstance>& dataset,
                                   const std::array<double, 4>& ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split_dataset: ratios must be >= 0");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split_dataset: ratios must sum to 1");

  Rng rng(seed);
  std::array<std::vector<std::string>, 2> groups;
  for (const auto& inst : dataset) groups[static_cast<int>(inst.label)].push_back(inst.id);
  for (auto& g : groups) rng.shuffle(g);

  std::vector<std::string> merged;
  merged.reserve(dataset.size());
  std::array<std::size_t, 2> taken{0, 0};
  while (merged.size() < dataset.size()) {
    int pick = -1;
    double best = 0.0;
    for (int g = 0; g < 2; ++g) {
      if (taken[g] >= groups[g].size()) continue;
      const double position = (taken[g] + 0.5) / static_cast<double>(groups[g].size());
      if (pick < 0 || position < best) {
        pick = g;
        best = position;
      }
    }
    merged.push_back(groups[pick][taken[pick]++]);
  }

  const std::size_t n = merged.size();
  std::array<std::size_t, 4> sizes{};
  std::array<double, 4> remainders{};
  std::size_t assigned = 0;
  for (int s = 0; s < 4; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    sizes[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainders[s] = exact - static_cast<double>(sizes[s]);
    assigned += sizes[s];
  }
  while (assigned < n) {
    int best = 0;
    for (int s = 1; s < 4; ++s) {
      if (remainders[s] > remainders[best]) best = s;
    }
    ++sizes[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  DatasetSplits out;
  std::array<std::vector<std::string>*, 4> targets = {&out.train, &out.validation, &out.test,
                                                      &out.interactive};
  std::size_t pos = 0;
  for (int s = 0; s < 4; ++s) {
    targets[s]->assign(merged.begin() + static_cast<std::ptrdiff_t>(pos),
                       merged.begin() + static_cast<std::ptrdiff_t>(pos + sizes[s]));
    pos += sizes[s];
  }
  return out;
}

// An instance collection with id lookup.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<LabeledInstance> instances) : instances_(std::move(instances)) {
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      if (!index_.emplace(instances_[i].id, i).second) {
        throw std::invalid_argument("duplicate instance id: " + instances_[i].id);
      }
    }
  }

  const std::vector<LabeledInstance>& instances() const { return instances_; }
  std::size_t size() const { return instances_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const LabeledInstance& at(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw NotFound("unknown instance id: " + id);
    return instances_[it->second];
  }

 private:
  std::vector<LabeledInstance> instances_;
  std::map<std::string, std::size_t> index_;
};

struct Manifest {
  std::vector<LabeledInstance> instances;
  DatasetSplits splits;

  bool operator==(const Manifest&) const = default;
};

// Writes <dir>/manifest.json, <dir>/images/<id>.png and <dir>/masks/<id>.png.
inline void save_manifest(const std::vector<LabeledInstance>& dataset, const DatasetSplits& splits,
                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  nlohmann::json doc;
  doc["format"] = "invrise-dataset";
  doc["version"] = 1;
  auto& list = doc["instances"] = nlohmann::json::array();
  std::set<std::string> seen;
  for (const auto& inst : dataset) {
    if (!seen.insert(inst.id).second) throw std::invalid_argument("duplicate instance id: " + inst.id);
    const std::string image_rel = "images/" + inst.id + ".png";
    save_png(dir / image_rel, inst.image);
    nlohmann::json entry = {{"id", inst.id},
                            {"label", std::string(to_string(inst.label))},
                            {"seed", inst.generator_seed},
                            {"image", image_rel}};
    entry["kind"] = inst.defect_kind ? nlohmann::json(std::string(to_string(*inst.defect_kind)))
                                     : nlohmann::json(nullptr);
    if (inst.defect_mask) {
      const std::string mask_rel = "masks/" + inst.id + ".png";
      save_mask_png(dir / mask_rel, *inst.defect_mask);
      entry["mask"] = mask_rel;
    } else {
      entry["mask"] = nullptr;
    }
    list.push_back(std::move(entry));
  }
  doc["splits"] = {{"train", splits.train},
                   {"validation", splits.validation},
                   {"test", splits.test},
                   {"interactive", splits.interactive}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << doc.dump(2) << '\n';
}

inline Manifest load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  Manifest out;
  std::set<std::string> ids;
  try {
    if (doc.at("format") != "invrise-dataset") throw LoadError(path.string() + ": unknown format");
    for (const auto& entry : doc.at("instances")) {
      LabeledInstance inst;
      inst.id = entry.at("id").get<std::string>();
      if (!ids.insert(inst.id).second) {
        throw LoadError(path.string() + ": duplicate instance id " + inst.id);
      }
      inst.label = parse_label(entry.at("label").get<std::string>());
      inst.generator_seed = entry.at("seed").get<std::uint64_t>();
      if (!entry.at("kind").is_null()) {
        inst.defect_kind = parse_defect_kind(entry.at("kind").get<std::string>());
      }
      try {
        inst.image = load_png(dir / entry.at("image").get<std::string>());
        if (!entry.at("mask").is_null()) {
          inst.defect_mask = load_mask_png(dir / entry.at("mask").get<std::string>());
        }
      } catch (const LoadError& e) {
        throw LoadError("instance " + inst.id + ": " + e.what());
      }
      const bool has_defect = inst.defect_mask && count_ones(*inst.defect_mask) > 0;
      if ((inst.label == Label::kNok) != has_defect) {
        throw LoadError("instance " + inst.id + ": label disagrees with defect mask");
      }
      if (inst.defect_mask && inst.defect_mask->side() != inst.image.side()) {
        throw LoadError("instance " + inst.id + ": mask size differs from image");
      }
      out.instances.push_back(std::move(inst));
    }
    const auto& splits = doc.at("splits");
    out.splits.train = splits.at("train").get<std::vector<std::string>>();
    out.splits.validation = splits.at("validation").get<std::vector<std::string>>();
    out.splits.test = splits.at("test").get<std::vector<std::string>>();
    out.splits.interactive = splits.at("interactive").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  std::set<std::string> assigned;
  for (const auto* split : {&out.splits.train, &out.splits.validation, &out.splits.test,
                            &out.splits.interactive}) {
    for (const auto& id : *split) {
      if (!ids.count(id)) throw LoadError(path.string() + ": split references unknown id " + id);
      if (!assigned.insert(id).second) {
        throw LoadError(path.string() + ": id " + id + " appears in more than one split");
      }
    }
  }
  return out;
}

// Refutation backgrounds live in <dir>/backgrounds/*.png.
inline void save_backgrounds(const std::vector<Image>& backgrounds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "backgrounds");
  for (std::size_t i = 0; i < backgrounds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "bg_%03zu.png", i);
    save_png(dir / "backgrounds" / name, backgrounds[i]);
  }
}

inline std::vector<Image> load_backgrounds(const std::filesystem::path& dir) {
  const auto bg_dir = dir / "backgrounds";
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(bg_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(bg_dir)) {
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_png(f));
  return out;
}

}  // namespace invrise

#endif  // INVRISE_DATASET_HPP_
