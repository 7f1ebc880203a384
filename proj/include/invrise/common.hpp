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

// Shared vocabulary: labels, error types, seeded randomness and the warning
// sink used by every other header.

#ifndef INVRISE_COMMON_HPP_
#define INVRISE_COMMON_HPP_

#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace invrise {

// Binary task: NOK (anomalous) is the positive class.
enum class Label : std::uint8_t { kOk = 0, kNok = 1 };

inline std::string_view to_string(Label label) {
  return label == Label::kNok ? "NOK" : "OK";
}

inline Label parse_label(std::string_view text) {
  if (text == "OK") return Label::kOk;
  if (text == "NOK") return Label::kNok;
  throw std::invalid_argument("unknown label: " + std::string(text));
}

inline Label other(Label label) {
  return label == Label::kNok ? Label::kOk : Label::kNok;
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation issued against an object that is not ready for it.
class StateError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Failure reading persisted artifacts (manifests, PNGs, checkpoints).
class LoadError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Seeds and random numbers.
//
// All randomness flows through Rng, which wraps mt19937_64 and converts bits
// to values by hand so that sequences do not depend on the standard library's
// distribution implementations.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Child seed for an independent stream; `stream` distinguishes siblings.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x5851F42D4C957F2Dull));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Warnings. Library code reports recoverable oddities (degenerate embeddings,
// skipped branches, convention fallbacks) here instead of throwing.

using WarningSink = std::function<void(std::string_view)>;

namespace detail {
inline std::mutex& warning_mutex() {
  static std::mutex mu;
  return mu;
}
inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "[invrise] warning: " << msg << '\n';
  };
  return sink;
}
}  // namespace detail

inline void warn(std::string_view message) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  if (detail::warning_sink()) detail::warning_sink()(message);
}

inline WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard<std::mutex> lock(detail::warning_mutex());
  return std::exchange(detail::warning_sink(), std::move(sink));
}

// Collects warnings for the lifetime of the object; restores the previous
// sink on destruction.
class WarningCapture {
 public:
  WarningCapture()
      : previous_(set_warning_sink([this](std::string_view msg) {
          messages_.emplace_back(msg);
        })) {}
  ~WarningCapture() { set_warning_sink(std::move(previous_)); }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const { return messages_; }
  bool contains(std::string_view needle) const {
    for (const auto& m : messages_) {
      if (m.find(needle) != std::string::npos) return true;
    }
    return false;
  }

 private:
  std::vector<std::string> messages_;
  WarningSink previous_;
};

}  // namespace invrise

#endif  // INVRISE_COMMON_HPP_
