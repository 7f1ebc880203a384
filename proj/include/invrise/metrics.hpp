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

// Explanation overlap metrics and confusion-matrix classification metrics.
// The positive class is NOK throughout.

#ifndef INVRISE_METRICS_HPP_
#define INVRISE_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/dataset.hpp"
#include "invrise/imaging.hpp"
#include "invrise/saliency.hpp"

namespace invrise {

namespace detail {

struct Overlap {
  std::size_t a = 0, b = 0, both = 0;
};

inline Overlap overlap(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.side() != b.side()) throw std::invalid_argument(std::string(op) + ": mask sizes differ");
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    o.a += x;
    o.b += y;
    o.both += x && y;
  }
  return o;
}

}  // namespace detail

// 2|A∩B| / (|A|+|B|); 1 when both masks are empty.
inline double dice(const BinaryMask& a, const BinaryMask& b) {
  const auto o = detail::overlap(a, b, "dice");
  if (o.a + o.b == 0) {
    warn("dice: both masks empty, using 1");
    return 1.0;
  }
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

// |A∩B| / |A∪B|; 1 when both masks are empty.
inline double jaccard(const BinaryMask& a, const BinaryMask& b) {
  const auto o = detail::overlap(a, b, "jaccard");
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) {
    warn("jaccard: both masks empty, using 1");
    return 1.0;
  }
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

// Whether the saliency argmax lies on the expert mask.
inline bool hit(const SaliencyMap& saliency, const BinaryMask& expert) {
  if (saliency.side() != expert.side()) throw std::invalid_argument("hit: sizes differ");
  if (count_ones(expert) == 0) throw std::invalid_argument("hit: expert mask is empty");
  return expert[argmax_pixel(saliency)] != 0;
}

struct ConfusionMatrix {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  void add(Label truth, Label predicted) {
    if (truth == Label::kNok) {
      (predicted == Label::kNok ? tp : fn) += 1;
    } else {
      (predicted == Label::kNok ? fp : tn) += 1;
    }
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
};

inline ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.fp < 0 || cm.tn < 0 || cm.fn < 0) {
    throw std::invalid_argument("classification_metrics: negative count");
  }
  if (cm.total() == 0) throw std::invalid_argument("classification_metrics: empty confusion matrix");
  const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
  ClassificationMetrics m;
  m.accuracy = (tp + tn) / static_cast<double>(cm.total());
  const double f1_den = 2 * tp + fp + fn;
  if (f1_den > 0) {
    m.f1 = 2 * tp / f1_den;
  } else {
    warn("f1: zero denominator, using 0");
  }
  const double prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (prod > 0) {
    m.mcc = (tp * tn - fp * fn) / std::sqrt(prod);
  } else {
    warn("mcc: zero marginal, using 0");
  }
  return m;
}

inline ConfusionMatrix confusion_matrix(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

// Confusion matrix of `classifier` over `instances`.
inline ConfusionMatrix evaluate_classifier(const BlackBoxClassifier& classifier,
                                           std::span<const LabeledInstance* const> instances) {
  ConfusionMatrix cm;
  for (const auto* inst : instances) cm.add(inst->label, predicted_label(classifier.predict(inst->image)));
  return cm;
}

struct ExplanationScore {
  double dice = 0.0;
  double jaccard = 0.0;
  bool hit = false;
};

inline ExplanationScore score_explanation(const SaliencyMap& saliency, const BinaryMask& expert,
                                          double top_fraction = 0.10) {
  const BinaryMask predicted = binarize_topfraction(saliency, top_fraction);
  return {dice(predicted, expert), jaccard(predicted, expert), hit(saliency, expert)};
}

struct ExplanationAggregate {
  double mean_dice = 0.0;
  double mean_jaccard = 0.0;
  double hit_accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Explains every instance for the NOK class, binarizes the top 10% and
// compares with the expert mask. Instances without a nonempty expert mask
// are skipped with a warning.
inline ExplanationAggregate evaluate_explanations(std::span<const LabeledInstance* const> instances,
                                                  const BlackBoxClassifier& classifier,
                                                  SaliencyMethod method, const MaskSet& masks,
                                                  double top_fraction = 0.10) {
  if (instances.empty()) throw std::invalid_argument("evaluate_explanations: no instances");
  ExplanationAggregate agg;
  for (const auto* inst : instances) {
    if (!inst->defect_mask || count_ones(*inst->defect_mask) == 0) {
      warn("evaluate_explanations: skipping " + inst->id + " (no expert mask)");
      ++agg.skipped;
      continue;
    }
    const auto map = explain(method, inst->image, classifier, masks, Label::kNok);
    const auto s = score_explanation(map, *inst->defect_mask, top_fraction);
    agg.mean_dice += s.dice;
    agg.mean_jaccard += s.jaccard;
    agg.hit_accuracy += s.hit ? 1.0 : 0.0;
    ++agg.evaluated;
  }
  if (agg.evaluated == 0) throw std::invalid_argument("evaluate_explanations: no instance has an expert mask");
  const double n = static_cast<double>(agg.evaluated);
  agg.mean_dice /= n;
  agg.mean_jaccard /= n;
  agg.hit_accuracy /= n;
  return agg;
}

inline void write_explanation_csv_header(std::ostream& out) {
  out << "method,model,dice,jaccard,hit_acc\n";
}

inline void write_explanation_csv_row(std::ostream& out, SaliencyMethod method, const std::string& model,
                                      const ExplanationAggregate& agg) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", agg.mean_dice, agg.mean_jaccard, agg.hit_accuracy);
  out << to_string(method) << ',' << model << ',' << buf << '\n';
}

}  // namespace invrise

#endif  // INVRISE_METRICS_HPP_
