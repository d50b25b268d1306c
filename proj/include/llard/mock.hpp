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

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "llard/dataset.hpp"
#include "llard/gateway.hpp"

namespace llard {

/// Rule table for the offline mock provider: ground-truth keyword sets per
/// external id, plus optional latent-interest keywords per user.
struct MockRules {
  std::map<std::string, std::set<std::string>> keywords;  // user & item ids
  std::map<std::string, std::set<std::string>> latent;    // user ids
  double collab_jaccard_threshold = 0.5;

  static std::set<std::string> tokenize(const std::string& text) {
    std::set<std::string> out;
    std::string cur;
    for (const char c : to_lower(text)) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
          c == '_') {
        cur += c;
      } else if (!cur.empty()) {
        out.insert(cur);
        cur.clear();
      }
    }
    if (!cur.empty()) out.insert(cur);
    return out;
  }

  /// Derive rules from a dataset catalog: item keywords come from the
  /// category field; a user's keywords are the dominant category tokens
  /// among their train items (frequency at least half the maximum, at most
  /// three). Rare one-off tokens stay out of the user's profile.
  static MockRules from_catalog(const Dataset& ds) {
    MockRules rules;
    if (!ds.catalog.present)
      throw DataError("mock rules need a text catalog (item categories)");
    for (std::size_t i = 0; i < ds.num_items(); ++i)
      rules.keywords[ds.item_ids[i]] = tokenize(ds.catalog.category[i]);
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
      std::map<std::string, int> freq;
      int max_freq = 0;
      for (const auto item : ds.user_train_items[u])
        for (const auto& t : rules.keywords[ds.item_ids[item]])
          max_freq = std::max(max_freq, ++freq[t]);
      std::vector<std::pair<int, std::string>> ranked;
      for (const auto& [t, c] : freq)
        if (2 * c >= max_freq) ranked.push_back({-c, t});
      std::sort(ranked.begin(), ranked.end());
      std::set<std::string> top;
      for (const auto& [negc, t] : ranked) {
        top.insert(t);
        if (top.size() == 3) break;
      }
      rules.keywords[ds.user_ids[u]] = std::move(top);
    }
    return rules;
  }
};

/// Deterministic rule-based provider for offline runs and CI. Responses are
/// a pure function of the request text and the rule table; embeddings are
/// hash-seeded unit vectors.
class MockTransport : public Transport {
public:
  explicit MockTransport(MockRules rules, std::size_t embedding_dim = 64)
      : rules_(std::move(rules)), dim_(embedding_dim) {}

  std::string chat(const PromptRequest& request) override {
    const std::string kind = request.tag.substr(0, request.tag.find(':'));
    const std::string subject = parse_subject(request.user_text);
    if (kind == "profile.user") {
      return "User " + subject + " consistently gravitates toward " +
             join(keywords_of(subject)) + ". " +
             "Their history shows steady engagement with these themes.";
    }
    if (kind == "profile.item") {
      return "Item " + subject + " is characterized by " +
             join(keywords_of(subject)) +
             ". It appeals to audiences interested in these topics.";
    }
    if (kind == "keywords") {
      return join(keywords_of(subject));
    }
    if (kind == "rate") {
      const auto user_kw = parse_keyword_line(request.user_text);
      const auto latent = latent_of(subject);
      std::string out;
      for (const auto& [id, kws] : parse_candidates(request.user_text)) {
        std::string tier = "Low";
        if (intersects(kws, user_kw)) tier = "High";
        else if (intersects(kws, latent)) tier = "Medium";
        out += id + ": " + tier + "\n";
      }
      return out;
    }
    if (kind == "noise") {
      const auto user_kw = parse_keyword_line(request.user_text);
      const auto latent = latent_of(subject);
      std::string out;
      for (const auto& [id, kws] : parse_candidates(request.user_text)) {
        if (!intersects(kws, user_kw) && !intersects(kws, latent))
          out += id + "\n";
      }
      return out.empty() ? "none" : out;
    }
    if (kind == "collab") {
      const auto user_kw = parse_keyword_line(request.user_text);
      std::string out;
      for (const auto& [id, kws] : parse_candidates(request.user_text)) {
        if (jaccard(user_kw, kws) >= rules_.collab_jaccard_threshold)
          out += id + "\n";
      }
      return out.empty() ? "none" : out;
    }
    if (kind == "interests") {
      const auto user_kw = parse_keyword_line(request.user_text);
      std::string out;
      for (const auto& [id, kws] : parse_candidates(request.user_text)) {
        if (intersects(kws, user_kw)) out += id + "\n";
      }
      return out.empty() ? "none" : out;
    }
    throw ProviderError("mock: unrecognized request tag: " + request.tag);
  }

  std::vector<float> embed(const std::string& text) override {
    // Bag-of-token hash embedding: each token contributes a hash-seeded
    // direction weighted by its count, and the sum is L2-normalized. Texts
    // sharing vocabulary land near each other, the way a real text-embedding
    // provider behaves, while staying a pure function of the input.
    std::map<std::string, int> counts;
    std::string cur;
    auto flush = [&] {
      if (!cur.empty()) ++counts[cur];
      cur.clear();
    };
    for (const char c : to_lower(text)) {
      if (std::isalnum(static_cast<unsigned char>(c))) cur += c;
      else flush();
    }
    flush();

    std::vector<double> v(dim_, 0.0);
    for (const auto& [token, count] : counts) {
      const Hash128 h = hash_bytes(token);
      std::uint64_t state = h.hi ^ (h.lo * 0x9e3779b97f4a7c15ULL);
      for (auto& x : v) {
        state = splitmix64(state);
        x += count *
             (2.0 * (static_cast<double>(state >> 11) * 0x1.0p-53) - 1.0);
      }
    }
    double norm_sq = 0.0;
    for (const double x : v) norm_sq += x * x;
    const double norm = norm_sq > 0.0 ? std::sqrt(norm_sq) : 1.0;
    std::vector<float> out(dim_);
    for (std::size_t k = 0; k < dim_; ++k)
      out[k] = static_cast<float>(v[k] / norm);
    return out;
  }

  std::size_t embedding_dim() const override { return dim_; }
  std::string model_name() const override { return "mock"; }

private:
  std::set<std::string> keywords_of(const std::string& id) const {
    const auto it = rules_.keywords.find(id);
    if (it == rules_.keywords.end() || it->second.empty())
      return {"general interest"};
    return it->second;
  }

  std::set<std::string> latent_of(const std::string& id) const {
    const auto it = rules_.latent.find(id);
    return it == rules_.latent.end() ? std::set<std::string>{} : it->second;
  }

  static std::string parse_subject(const std::string& text) {
    for (const auto& line : split(text, '\n')) {
      if (starts_with(line, "Subject:")) {
        const auto fields = split(trim(line.substr(8)), ' ');
        return fields.empty() ? "" : trim(fields.back());
      }
    }
    return "";
  }

  static std::set<std::string> parse_keyword_line(const std::string& text) {
    for (const auto& line : split(text, '\n')) {
      if (starts_with(line, "User keywords:")) {
        std::set<std::string> out;
        for (const auto& kw : split(line.substr(14), ','))
          if (!trim(kw).empty()) out.insert(to_lower(trim(kw)));
        return out;
      }
    }
    return {};
  }

  // Candidate lines: `- <id> | keywords: <csv>`.
  static std::vector<std::pair<std::string, std::set<std::string>>>
  parse_candidates(const std::string& text) {
    std::vector<std::pair<std::string, std::set<std::string>>> out;
    for (const auto& line : split(text, '\n')) {
      if (!starts_with(line, "- ")) continue;
      const auto bar = line.find(" | keywords: ");
      if (bar == std::string::npos) continue;
      const std::string id = trim(line.substr(2, bar - 2));
      std::set<std::string> kws;
      for (const auto& kw : split(line.substr(bar + 13), ','))
        if (!trim(kw).empty()) kws.insert(to_lower(trim(kw)));
      out.push_back({id, std::move(kws)});
    }
    return out;
  }

  static bool intersects(const std::set<std::string>& a,
                         const std::set<std::string>& b) {
    for (const auto& x : a)
      if (b.count(x)) return true;
    return false;
  }

  static double jaccard(const std::set<std::string>& a,
                        const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) /
           static_cast<double>(a.size() + b.size() - inter);
  }

  static std::string join(const std::set<std::string>& kws) {
    std::string out;
    for (const auto& kw : kws) {
      if (!out.empty()) out += ", ";
      out += kw;
    }
    return out;
  }

  MockRules rules_;
  std::size_t dim_;
};

}  // namespace llard
