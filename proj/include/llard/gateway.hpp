// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "llard/common.hpp"

namespace llard {

// ---------------------------------------------------------------------------
// Requests and provider configuration
// ---------------------------------------------------------------------------

struct PromptRequest {
  std::string system_text;
  std::string user_text;
  int max_tokens = 1024;
  double temperature = 0.0;  // deterministic decoding by default
  std::string tag;           // audit label, e.g. "rate:u12"
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_base_ms = 250;  // sleep base * 2^attempt between attempts
};

struct ProviderConfig {
  std::string endpoint;              // e.g. https://host/v1
  std::string model;
  std::string embed_model;           // defaults to `model` when empty
  std::string api_key_env = "LLARD_API_KEY";
  int timeout_seconds = 60;
  int max_parallel = 4;
  RetryPolicy retry;
  std::size_t embedding_dim = 0;     // d_t; validated against responses
};

// ---------------------------------------------------------------------------
// Transport: one provider call, no caching or retry. Implementations:
// HttpTransport (OpenAI-compatible JSON), MockTransport (rule-based, offline),
// plus instrumented fakes in tests.
// ---------------------------------------------------------------------------

class Transport {
public:
  virtual ~Transport() = default;
  virtual std::string chat(const PromptRequest& request) = 0;
  virtual std::vector<float> embed(const std::string& text) = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::string model_name() const = 0;
};

// ---------------------------------------------------------------------------
// Append-only response cache.
// Record layout: `hash(32 hex chars) \n payload_kind \n payload_length \n
// payload bytes`. Embedding payloads are little-endian float32.
// ---------------------------------------------------------------------------

class ResponseCache {
public:
  struct Payload {
    std::string kind;  // "text" | "embedding"
    std::string bytes;
  };

  ResponseCache() = default;  // memory-only

  explicit ResponseCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // first run: file created on the first append
    std::string hash_line, kind, len_line;
    while (std::getline(in, hash_line)) {
      if (hash_line.empty()) continue;
      if (!std::getline(in, kind) || !std::getline(in, len_line))
        throw DataError("cache file truncated: " + path_);
      const std::size_t len = std::stoul(len_line);
      std::string bytes(len, '\0');
      if (!in.read(bytes.data(), static_cast<std::streamsize>(len)))
        throw DataError("cache file truncated: " + path_);
      entries_[hash_line] = Payload{kind, std::move(bytes)};
    }
  }

  std::optional<Payload> lookup(const Hash128& key) const {
    std::lock_guard lock(mu_);
    const auto it = entries_.find(key.hex());
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void append(const Hash128& key, const std::string& kind,
              const std::string& bytes) {
    std::lock_guard lock(mu_);
    entries_[key.hex()] = Payload{kind, bytes};
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw DataError("cannot append to cache file: " + path_);
    out << key.hex() << '\n' << kind << '\n' << bytes.size() << '\n';
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

private:
  std::string path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Payload> entries_;
};

// ---------------------------------------------------------------------------
// Gateway: cache + retry + bounded concurrency over a Transport.
// ---------------------------------------------------------------------------

struct GatewayOptions {
  std::string cache_path;  // empty: in-memory cache only
  int max_parallel = 4;
  RetryPolicy retry;
};

class Gateway {
public:
  Gateway(std::shared_ptr<Transport> transport, GatewayOptions options)
      : transport_(std::move(transport)),
        options_(options),
        cache_(options.cache_path.empty()
                   ? ResponseCache()
                   : ResponseCache(options.cache_path)),
        slots_(std::max(1, options.max_parallel)) {
    if (options_.max_parallel < 1)
      throw UsageError("gateway: max_parallel must be >= 1");
    if (options_.retry.max_attempts < 1)
      throw UsageError("gateway: retry attempts must be >= 1");
  }

  /// Chat completion; cache hits are returned byte-identically.
  std::string complete(const PromptRequest& request) {
    if (request.system_text.empty() || request.user_text.empty())
      throw UsageError("gateway: system_text and user_text must be non-empty");
    const Hash128 key = completion_key(request);
    if (auto hit = cache_.lookup(key)) {
      ++cache_hits_;
      return hit->bytes;
    }
    ++cache_misses_;
    const std::string text =
        with_retry([&] { return transport_->chat(request); });
    cache_.append(key, "text", text);
    return text;
  }

  /// Pooled text embedding of provider dimension d_t, widened to double.
  std::vector<double> embed_text(const std::string& text) {
    if (text.empty()) throw UsageError("gateway: embed_text on empty text");
    const Hash128 key = embedding_key(text);
    if (auto hit = cache_.lookup(key)) {
      ++cache_hits_;
      return decode_embedding(hit->bytes);
    }
    ++cache_misses_;
    const std::vector<float> vec =
        with_retry([&] { return transport_->embed(text); });
    cache_.append(key, "embedding", encode_embedding(vec));
    std::vector<double> out(vec.begin(), vec.end());
    return out;
  }

  std::size_t embedding_dim() const { return transport_->embedding_dim(); }

  std::size_t cache_hits() const { return cache_hits_.load(); }
  std::size_t cache_misses() const { return cache_misses_.load(); }

private:
  Hash128 completion_key(const PromptRequest& r) const {
    char temp[32];
    std::snprintf(temp, sizeof(temp), "%.17g", r.temperature);
    return hash_fields({"chat", transport_->model_name(), r.system_text,
                        r.user_text, temp});
  }

  Hash128 embedding_key(const std::string& text) const {
    return hash_fields({"embed", transport_->model_name(), text});
  }

  static std::string encode_embedding(const std::vector<float>& v) {
    std::string bytes(v.size() * sizeof(float), '\0');
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return bytes;
  }

  static std::vector<double> decode_embedding(const std::string& bytes) {
    std::vector<float> v(bytes.size() / sizeof(float));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return {v.begin(), v.end()};
  }

  template <typename Fn>
  auto with_retry(Fn&& fn) -> decltype(fn()) {
    std::string last_error;
    for (int attempt = 0; attempt < options_.retry.max_attempts; ++attempt) {
      if (attempt > 0 && options_.retry.backoff_base_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(
            options_.retry.backoff_base_ms << (attempt - 1)));
      }
      slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};
      try {
        return fn();
      } catch (const TransportError& e) {
        last_error = e.what();
      } catch (const ProviderError& e) {
        if (e.status() == 429 || e.status() >= 500) {
          last_error = e.what();
        } else {
          throw;  // terminal provider error (4xx other than 429)
        }
      }
    }
    throw TransportError("gateway: giving up after " +
                         std::to_string(options_.retry.max_attempts) +
                         " attempts: " + last_error);
  }

  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  ResponseCache cache_;
  std::counting_semaphore<> slots_;
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> cache_misses_{0};
};

// ---------------------------------------------------------------------------
// Provider config file: `key = value` lines.
// ---------------------------------------------------------------------------

inline std::unordered_map<std::string, std::string> read_kv_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  std::unordered_map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ": expected `key = value`, got: " + stripped);
    kv[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

inline ProviderConfig read_provider_config(const std::string& path) {
  const auto kv = read_kv_file(path);
  ProviderConfig cfg;
  auto get = [&](const char* key) -> std::optional<std::string> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("endpoint")) cfg.endpoint = *v;
  if (auto v = get("model")) cfg.model = *v;
  if (auto v = get("embed_model")) cfg.embed_model = *v;
  if (auto v = get("api_key_env")) cfg.api_key_env = *v;
  if (auto v = get("timeout_seconds")) cfg.timeout_seconds = std::stoi(*v);
  if (auto v = get("max_parallel")) cfg.max_parallel = std::stoi(*v);
  if (auto v = get("retry_attempts")) cfg.retry.max_attempts = std::stoi(*v);
  if (auto v = get("backoff_base_ms")) cfg.retry.backoff_base_ms = std::stoi(*v);
  if (auto v = get("embedding_dim")) cfg.embedding_dim = std::stoul(*v);
  if (cfg.endpoint.empty() || cfg.model.empty())
    throw UsageError(path + ": provider config needs `endpoint` and `model`");
  if (cfg.embed_model.empty()) cfg.embed_model = cfg.model;
  return cfg;
}

}  // namespace llard
