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

// Fixtures shared by the unit tests.

#ifndef INVRISE_TESTS_TEST_UTIL_HPP_
#define INVRISE_TESTS_TEST_UTIL_HPP_

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/imaging.hpp"

namespace invrise::testing {

inline Image random_image(int side, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Image out(side, channels);
  for (double& v : out.pixels()) v = rng.uniform();
  return out;
}

inline BinaryMask random_mask(int side, double density, std::uint64_t seed) {
  Rng rng(seed);
  BinaryMask out(side);
  for (auto& v : out.values()) v = rng.bernoulli(density) ? 1 : 0;
  return out;
}

// Classifier defined by a function of the (masked) image; counts calls.
class FunctionClassifier : public BlackBoxClassifier {
 public:
  explicit FunctionClassifier(std::function<double(const Image&)> fn, std::size_t embedding = 2)
      : fn_(std::move(fn)), embedding_(embedding) {}
  double predict(const Image& image) const override {
    ++calls_;
    return fn_(image);
  }
  Embedding embed(const Image& image) const override {
    Embedding e(embedding_, 0.0);
    e[0] = fn_(image);
    if (embedding_ > 1) e[1] = 1.0;
    return e;
  }
  std::size_t embedding_size() const override { return embedding_; }
  std::size_t calls() const { return calls_; }

 private:
  std::function<double(const Image&)> fn_;
  std::size_t embedding_;
  mutable std::atomic<std::size_t> calls_{0};
};

// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "invrise-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace invrise::testing

#endif  // INVRISE_TESTS_TEST_UTIL_HPP_
