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

// Embedding codebook with cosine-similarity retrieval of near hits, near
// misses and furthest hits. Retrieval is an exhaustive scan.

#ifndef INVRISE_NEIGHBORS_HPP_
#define INVRISE_NEIGHBORS_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/dataset.hpp"

namespace invrise {

// Cosine similarity. A zero vector has similarity 0 to everything.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    warn("cosine: degenerate (zero) embedding, similarity set to 0");
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct CodebookEntry {
  std::string id;
  Embedding embedding;
  Label label = Label::kOk;
};

class Codebook {
 public:
  Codebook() = default;
  Codebook(std::vector<CodebookEntry> entries, std::uint64_t classifier_version)
      : entries_(std::move(entries)), version_(classifier_version) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!index_.emplace(entries_[i].id, i).second) {
        throw std::invalid_argument("codebook: duplicate id " + entries_[i].id);
      }
      if (entries_[i].embedding.size() != entries_.front().embedding.size()) {
        throw std::invalid_argument("codebook: embeddings differ in length");
      }
    }
  }

  const std::vector<CodebookEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t classifier_version() const { return version_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const CodebookEntry& at(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw NotFound("codebook: unknown id " + id);
    return entries_[it->second];
  }

  // Throws StateError unless the codebook was built by `version`.
  void require_version(std::uint64_t version) const {
    if (version != version_) {
      throw StateError("codebook is stale (built for classifier version " + std::to_string(version_) +
                       ", current " + std::to_string(version) + ")");
    }
  }

 private:
  std::vector<CodebookEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

inline Codebook build_codebook(std::span<const LabeledInstance* const> pool,
                               const BlackBoxClassifier& classifier, std::uint64_t classifier_version) {
  std::vector<CodebookEntry> entries;
  entries.reserve(pool.size());
  for (const auto* inst : pool) {
    try {
      entries.push_back({inst->id, classifier.embed(inst->image), inst->label});
    } catch (const std::exception& e) {
      throw Error("build_codebook: instance " + inst->id + ": " + e.what());
    }
  }
  return Codebook(std::move(entries), classifier_version);
}

// A query is either a codebook id (excluded from its own candidates) or a
// raw embedding.
using NeighborQuery = std::variant<std::string, Embedding>;

namespace detail {

enum class Pick { kNearest, kFurthest };

inline std::string retrieve(const Codebook& codebook, const NeighborQuery& query, Label wanted,
                            Pick pick, const char* op) {
  const std::string* self = std::get_if<std::string>(&query);
  const Embedding& q = self ? codebook.at(*self).embedding : std::get<Embedding>(query);
  const CodebookEntry* best = nullptr;
  double best_sim = 0.0;
  for (const auto& e : codebook.entries()) {
    if (e.label != wanted || (self && e.id == *self)) continue;
    const double sim = cosine(q, e.embedding);
    const bool better = !best || (pick == Pick::kNearest ? sim > best_sim : sim < best_sim) ||
                        (sim == best_sim && e.id < best->id);
    if (better) {
      best = &e;
      best_sim = sim;
    }
  }
  if (!best) throw NotFound(std::string(op) + ": no candidate with label " + std::string(to_string(wanted)));
  return best->id;
}

}  // namespace detail

// Most similar entry with the query's label. Ties go to the smallest id.
inline std::string near_hit(const Codebook& codebook, const NeighborQuery& query, Label query_label) {
  return detail::retrieve(codebook, query, query_label, detail::Pick::kNearest, "near_hit");
}

// Most similar entry with the other label.
inline std::string near_miss(const Codebook& codebook, const NeighborQuery& query, Label query_label) {
  return detail::retrieve(codebook, query, other(query_label), detail::Pick::kNearest, "near_miss");
}

// Least similar entry with the query's label.
inline std::string furthest_hit(const Codebook& codebook, const NeighborQuery& query, Label query_label) {
  return detail::retrieve(codebook, query, query_label, detail::Pick::kFurthest, "furthest_hit");
}

}  // namespace invrise

#endif  // INVRISE_NEIGHBORS_HPP_
