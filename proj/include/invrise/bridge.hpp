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

// Out-of-process classifiers.
//
// Wire format: newline-delimited JSON over the child's stdin/stdout.
//   server hello:  {"hello":"invrise-bridge","version":1,"embedding_len":N}
//   request:       {"id":7,"op":"predict"|"embed","png":"<base64>"}
//   response:      {"id":7,"confidence":0.93} | {"id":7,"embedding":[...]}
//                  {"id":7,"error":"..."}
// Images travel as 16-bit PNGs. Responses may arrive in any order and are
// matched to requests by id.

#ifndef INVRISE_BRIDGE_HPP_
#define INVRISE_BRIDGE_HPP_

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <deque>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "invrise/classifier.hpp"
#include "invrise/common.hpp"
#include "invrise/png_io.hpp"
#include "json.hpp"

namespace invrise {

class BridgeError : public Error {
 public:
  using Error::Error;
};

class BridgeTimeout : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

class ProtocolError : public BridgeError {
 public:
  using BridgeError::BridgeError;
};

namespace detail {

inline std::string excerpt(std::string_view text, std::size_t limit = 80) {
  if (text.size() <= limit) return std::string(text);
  return std::string(text.substr(0, limit)) + "...";
}

}  // namespace detail

struct BridgeOptions {
  std::chrono::milliseconds timeout{30000};
  std::size_t window = 16;  // outstanding requests during predict_batch
};

// Runs a classifier in a child process and speaks the bridge protocol to it.
class BridgeClassifier final : public BlackBoxClassifier {
 public:
  explicit BridgeClassifier(std::vector<std::string> argv, BridgeOptions options = {})
      : options_(options) {
    if (argv.empty()) throw std::invalid_argument("BridgeClassifier: empty command");
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      throw BridgeError(std::string("socketpair failed: ") + std::strerror(errno));
    }
    std::vector<char*> args;
    for (auto& a : argv) args.push_back(a.data());
    args.push_back(nullptr);
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw BridgeError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(fds[1], STDIN_FILENO);
      ::dup2(fds[1], STDOUT_FILENO);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    fd_ = fds[0];
    command_ = argv.front();
    const std::string hello_line = read_line(deadline());
    nlohmann::json hello;
    try {
      hello = nlohmann::json::parse(hello_line);
      if (hello.at("hello") != "invrise-bridge" || hello.at("version") != 1) {
        throw ProtocolError("unexpected handshake: " + detail::excerpt(hello_line));
      }
      embedding_len_ = hello.at("embedding_len").get<std::size_t>();
    } catch (const nlohmann::json::exception&) {
      shutdown();
      throw ProtocolError("malformed handshake: " + detail::excerpt(hello_line));
    } catch (...) {
      shutdown();
      throw;
    }
  }

  BridgeClassifier(const BridgeClassifier&) = delete;
  BridgeClassifier& operator=(const BridgeClassifier&) = delete;
  ~BridgeClassifier() override { shutdown(); }

  std::size_t embedding_size() const override { return embedding_len_; }

  double predict(const Image& image) const override {
    std::lock_guard lock(mutex_);
    const auto id = send_request("predict", image);
    return confidence_of(await(id));
  }

  Embedding embed(const Image& image) const override {
    std::lock_guard lock(mutex_);
    const auto id = send_request("embed", image);
    const auto response = await(id);
    const auto it = response.find("embedding");
    if (it == response.end() || !it->is_array()) {
      throw ProtocolError("response without embedding: " + detail::excerpt(response.dump()));
    }
    Embedding e;
    try {
      e = it->get<Embedding>();
    } catch (const nlohmann::json::exception&) {
      throw ProtocolError("non-numeric embedding: " + detail::excerpt(response.dump()));
    }
    if (e.size() != embedding_len_) {
      throw ProtocolError("embedding length " + std::to_string(e.size()) + ", expected " +
                          std::to_string(embedding_len_));
    }
    return e;
  }

  // Keeps up to options.window requests in flight.
  std::vector<double> predict_batch(std::span<const Image> images) const override {
    std::lock_guard lock(mutex_);
    std::vector<double> out(images.size());
    std::deque<std::pair<std::uint64_t, std::size_t>> in_flight;
    std::size_t next = 0;
    while (next < images.size() || !in_flight.empty()) {
      while (next < images.size() && in_flight.size() < options_.window) {
        in_flight.emplace_back(send_request("predict", images[next]), next);
        ++next;
      }
      const auto [id, index] = in_flight.front();
      in_flight.pop_front();
      out[index] = confidence_of(await(id));
    }
    return out;
  }

  pid_t pid() const { return pid_; }

 private:
  using Clock = std::chrono::steady_clock;

  Clock::time_point deadline() const { return Clock::now() + options_.timeout; }

  std::uint64_t send_request(const char* op, const Image& image) const {
    if (fd_ < 0) throw BridgeError("bridge is closed");
    const std::uint64_t id = next_id_++;
    const nlohmann::json request = {{"id", id}, {"op", op}, {"png", base64_encode(encode_png(image, PngDepth::k16))}};
    const std::string line = request.dump() + "\n";
    std::size_t sent = 0;
    const auto until = deadline();
    while (sent < line.size()) {
      pollfd p{fd_, POLLOUT, 0};
      const int ready = ::poll(&p, 1, remaining_ms(until));
      if (ready < 0 && errno == EINTR) continue;
      if (ready == 0) throw BridgeTimeout("bridge timed out sending request " + std::to_string(id));
      const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL | MSG_DONTWAIT);
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        throw BridgeError(std::string("bridge write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
    return id;
  }

  nlohmann::json await(std::uint64_t id) const {
    const auto until = deadline();
    for (;;) {
      if (const auto it = parked_.find(id); it != parked_.end()) {
        auto response = std::move(it->second);
        parked_.erase(it);
        if (const auto err = response.find("error"); err != response.end()) {
          throw BridgeError("bridge error for request " + std::to_string(id) + ": " + err->dump());
        }
        return response;
      }
      const std::string line = read_line(until);
      nlohmann::json response;
      try {
        response = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw ProtocolError("malformed response: " + detail::excerpt(line));
      }
      if (!response.is_object() || !response.contains("id") || !response["id"].is_number_unsigned()) {
        throw ProtocolError("response without id: " + detail::excerpt(line));
      }
      const auto response_id = response["id"].get<std::uint64_t>();
      parked_[response_id] = std::move(response);
    }
  }

  static double confidence_of(const nlohmann::json& response) {
    const auto it = response.find("confidence");
    if (it == response.end() || !it->is_number()) {
      throw ProtocolError("response without confidence: " + detail::excerpt(response.dump()));
    }
    const double c = it->get<double>();
    if (!(c >= 0.0 && c <= 1.0)) throw ProtocolError("confidence outside [0, 1]: " + it->dump());
    return c;
  }

  static int remaining_ms(Clock::time_point until) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - Clock::now()).count();
    return static_cast<int>(std::max<long long>(0, left));
  }

  std::string read_line(Clock::time_point until) const {
    for (;;) {
      if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      if (fd_ < 0) throw BridgeError("bridge is closed");
      pollfd p{fd_, POLLIN, 0};
      const int ready = ::poll(&p, 1, remaining_ms(until));
      if (ready < 0 && errno == EINTR) continue;
      if (ready == 0) throw BridgeTimeout("bridge timed out after " + std::to_string(options_.timeout.count()) + " ms");
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
      if (n <= 0) throw BridgeError("bridge process " + command_ + " closed its output");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void shutdown() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) != 0) {
          pid_ = -1;
          return;
        }
        ::usleep(2000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  BridgeOptions options_;
  pid_t pid_ = -1;
  mutable int fd_ = -1;
  std::string command_;
  std::size_t embedding_len_ = 0;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 1;
  mutable std::string buffer_;
  mutable std::map<std::uint64_t, nlohmann::json> parked_;
};

// Serves `classifier` over the bridge protocol until `in` reaches EOF.
// Request-level failures are answered with an error object; the loop
// continues.
inline void serve_bridge(const BlackBoxClassifier& classifier, std::istream& in, std::ostream& out) {
  out << nlohmann::json{{"hello", "invrise-bridge"}, {"version", 1}, {"embedding_len", classifier.embedding_size()}}.dump()
      << '\n'
      << std::flush;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json response;
    try {
      const auto request = nlohmann::json::parse(line);
      response["id"] = request.at("id");
      const Image image = decode_png(base64_decode(request.at("png").get<std::string>()));
      const auto op = request.at("op").get<std::string>();
      if (op == "predict") {
        response["confidence"] = classifier.predict(image);
      } else if (op == "embed") {
        response["embedding"] = classifier.embed(image);
      } else {
        response["error"] = "unknown op " + op;
      }
    } catch (const std::exception& e) {
      if (!response.contains("id")) response["id"] = nullptr;
      response["error"] = e.what();
    }
    out << response.dump() << '\n' << std::flush;
  }
}

}  // namespace invrise

#endif  // INVRISE_BRIDGE_HPP_
