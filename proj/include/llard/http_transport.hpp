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

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llard/gateway.hpp"

namespace llard {

/// OpenAI-compatible HTTP provider: chat completions (`messages` in,
/// `choices` out) and embeddings (`input` in, `data[].embedding` out).
/// The API key is read from the environment variable named in the config.
class HttpTransport : public Transport {
public:
  explicit HttpTransport(ProviderConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw UsageError("provider endpoint must include a scheme: " +
                       config_.endpoint);
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      base_ = config_.endpoint;
      path_prefix_ = "";
    } else {
      base_ = config_.endpoint.substr(0, path_start);
      path_prefix_ = config_.endpoint.substr(path_start);
      while (!path_prefix_.empty() && path_prefix_.back() == '/')
        path_prefix_.pop_back();
    }
    if (const char* key = std::getenv(config_.api_key_env.c_str()))
      api_key_ = key;
  }

  std::string chat(const PromptRequest& request) override {
    nlohmann::json body = {
        {"model", config_.model},
        {"messages",
         {{{"role", "system"}, {"content", request.system_text}},
          {{"role", "user"}, {"content", request.user_text}}}},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    const auto json = post(path_prefix_ + "/chat/completions", body.dump());
    try {
      return json.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed chat response: ") + e.what());
    }
  }

  std::vector<float> embed(const std::string& text) override {
    nlohmann::json body = {{"model", config_.embed_model},
                           {"input", nlohmann::json::array({text})}};
    const auto json = post(path_prefix_ + "/embeddings", body.dump());
    std::vector<float> vec;
    try {
      vec = json.at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") +
                          e.what());
    }
    if (config_.embedding_dim != 0 && vec.size() != config_.embedding_dim) {
      throw ProviderError("embedding dimension mismatch: got " +
                          std::to_string(vec.size()) + ", config says " +
                          std::to_string(config_.embedding_dim));
    }
    return vec;
  }

  std::size_t embedding_dim() const override { return config_.embedding_dim; }
  std::string model_name() const override { return config_.model; }

private:
  nlohmann::json post(const std::string& path, const std::string& body) {
    httplib::Client client(base_);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);
    const auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      throw TransportError("transport failure on " + path + ": " +
                           httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderError("provider returned HTTP " +
                              std::to_string(res->status) + " on " + path,
                          res->status);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("provider returned invalid JSON: ") +
                          e.what());
    }
  }

  ProviderConfig config_;
  std::string base_;
  std::string path_prefix_;
  std::string api_key_;
};

}  // namespace llard
