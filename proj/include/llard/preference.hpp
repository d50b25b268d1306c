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
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "llard/dataset.hpp"
#include "llard/gateway.hpp"
#include "llard/matrix.hpp"
#include "llard/prompts.hpp"

namespace llard {

enum class SubjectKind { User, Item };

struct ConfigText {
  SubjectKind subject;
  std::uint32_t index;
  std::string body;
};

// ---------------------------------------------------------------------------
// Projection head: pooled text vector (d_t) -> model space (d). A single
// affine layer by default; an optional hidden ReLU layer sits behind a flag.
// Trained jointly with the model (gradient arrives through the preference
// alignment loss only).
// ---------------------------------------------------------------------------

struct ProjectionHead {
  std::size_t d = 0, d_t = 0;
  bool has_hidden = false;
  std::size_t hidden = 256;

  Mat w;                    // d x d_t           (affine form)
  Mat w1;                   // hidden x d_t      (hidden form)
  std::vector<double> b1;   // hidden
  Mat w2;                   // d x hidden
  std::vector<double> b;    // d (output bias, both forms)

  static ProjectionHead init(std::size_t d, std::size_t d_t, Rng& rng,
                             bool with_hidden = false,
                             std::size_t hidden = 256) {
    ProjectionHead h;
    h.d = d;
    h.d_t = d_t;
    h.has_hidden = with_hidden;
    h.hidden = hidden;
    h.b.assign(d, 0.0);
    if (with_hidden) {
      h.w1 = Mat::randn(hidden, d_t, 1.0 / std::sqrt(double(d_t)), rng);
      h.b1.assign(hidden, 0.0);
      h.w2 = Mat::randn(d, hidden, 1.0 / std::sqrt(double(hidden)), rng);
    } else {
      h.w = Mat::randn(d, d_t, 1.0 / std::sqrt(double(d_t)), rng);
    }
    return h;
  }

  /// row = W_t t + b (or the two-layer form).
  std::vector<double> apply(std::span<const double> t) const {
    if (t.size() != d_t)
      throw UsageError("projection head: pooled dimension mismatch (got " +
                       std::to_string(t.size()) + ", head expects " +
                       std::to_string(d_t) + ")");
    std::vector<double> out(b.begin(), b.end());
    if (!has_hidden) {
      for (std::size_t r = 0; r < d; ++r) out[r] += dot(w.row_span(r), t);
      return out;
    }
    std::vector<double> z(hidden);
    for (std::size_t h = 0; h < hidden; ++h) {
      const double a = b1[h] + dot(w1.row_span(h), t);
      z[h] = a > 0.0 ? a : 0.0;
    }
    for (std::size_t r = 0; r < d; ++r) out[r] += dot(w2.row_span(r), z);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Preference knowledge K_p
// ---------------------------------------------------------------------------

struct PreferenceKnowledge {
  std::size_t d = 0;    // model dimension of the projected rows
  std::size_t d_t = 0;  // provider embedding dimension
  std::vector<std::string> user_profiles, item_profiles;
  std::vector<std::vector<std::string>> user_keywords, item_keywords;
  Mat user_pooled, item_pooled;  // |U| x d_t, |I| x d_t provider vectors
  Mat user_sem, item_sem;        // Ẽ_u, Ẽ_i projected with `head`
  ProjectionHead head;

  const Mat& pooled(SubjectKind kind) const {
    return kind == SubjectKind::User ? user_pooled : item_pooled;
  }
};

struct PreferenceOptions {
  std::size_t max_keywords = 10;
  std::size_t text_budget = 6000;  // config-text character budget
  std::size_t model_dim = 64;
  bool head_hidden = false;
  std::uint64_t seed = 0;
  int workers = 4;
};

// ---------------------------------------------------------------------------
// Configuration texts
// ---------------------------------------------------------------------------

namespace detail {

// Cut at the byte budget without splitting a UTF-8 code point.
inline std::string truncate_utf8(std::string s, std::size_t budget) {
  if (s.size() <= budget) return s;
  std::size_t cut = budget;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xc0) == 0x80) --cut;
  s.resize(cut);
  return s;
}

}  // namespace detail

/// Item body: title, category, description joined by single newlines.
/// User body: per train item (most recent first): title, description, the
/// user's comment on it. Missing fields contribute empty strings; the body is
/// suffix-truncated at the budget so recent interactions survive.
inline ConfigText build_config_text(const Dataset& ds, SubjectKind kind,
                                    std::uint32_t index,
                                    std::size_t budget = 6000) {
  if (!ds.catalog.present)
    throw DataError("build_config_text: dataset has no text catalog");
  std::string body;
  if (kind == SubjectKind::Item) {
    body = ds.catalog.title[index] + "\n" + ds.catalog.category[index] + "\n" +
           ds.catalog.description[index];
  } else {
    const auto& items = ds.user_recent_items[index];
    for (std::size_t k = 0; k < items.size(); ++k) {
      const std::uint32_t i = items[k];
      const std::string* comment = ds.comment_on(index, i);
      if (k > 0) body += "\n";
      body += ds.catalog.title[i] + "\n" + ds.catalog.description[i] + "\n" +
              (comment ? *comment : std::string());
      if (body.size() > budget) break;  // later (older) items cannot appear
    }
  }
  if (trim(body).empty()) {
    throw DataError("build_config_text: empty text for " +
                    std::string(kind == SubjectKind::User ? "user " : "item ") +
                    std::to_string(index));
  }
  return ConfigText{kind, index, detail::truncate_utf8(std::move(body), budget)};
}

// ---------------------------------------------------------------------------
// Generation pipeline
// ---------------------------------------------------------------------------

namespace detail {

/// Run fn(index) for every index in [0, n) on a small worker pool. The first
/// exception wins and is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const int pool = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  for (int t = 0; t < pool; ++t) {
    threads.emplace_back([&] {
      while (!failed.load()) {
        const std::size_t idx = next.fetch_add(1);
        if (idx >= n) return;
        try {
          fn(idx);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::string keywords_csv(const std::vector<std::string>& kws) {
  std::string out;
  for (const auto& kw : kws) {
    if (!out.empty()) out += ", ";
    out += kw;
  }
  return out;
}

}  // namespace detail

/// One profile per subject through the gateway; embarrassingly parallel and
/// order-independent.
inline std::vector<std::string> generate_profiles(
    const Dataset& ds, SubjectKind kind, Gateway& gateway,
    const PromptLibrary& prompts, const PreferenceOptions& options) {
  const std::size_t n =
      kind == SubjectKind::User ? ds.num_users() : ds.num_items();
  const auto& tpl =
      prompts.get(kind == SubjectKind::User ? "user_profile" : "item_profile");
  const char* tag = kind == SubjectKind::User ? "profile.user" : "profile.item";
  std::vector<std::string> profiles(n);
  detail::parallel_for(n, options.workers, [&](std::size_t idx) {
    const auto& id = kind == SubjectKind::User ? ds.user_ids[idx]
                                               : ds.item_ids[idx];
    try {
      const auto cfg = build_config_text(ds, kind, static_cast<std::uint32_t>(idx),
                                         options.text_budget);
      PromptRequest r;
      r.system_text = tpl.system;
      r.user_text = PromptLibrary::render(
          tpl.user, {{"subject_id", id}, {"config_text", cfg.body}});
      r.tag = std::string(tag) + ":" + id;
      profiles[idx] = gateway.complete(r);
    } catch (const ProviderError& e) {
      throw ProviderError("profile generation failed for " + id + ": " +
                          e.what(), e.status());
    }
  });
  return profiles;
}

/// Normalize one keyword: trim, lowercase, collapse whitespace, cap at five
/// words.
inline std::string normalize_keyword(const std::string& raw) {
  std::string lowered = to_lower(trim(raw));
  std::string out;
  int words = 0;
  bool in_space = false;
  for (const char c : lowered) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = !out.empty();
      continue;
    }
    if (in_space) {
      if (++words >= 5) break;
      out += ' ';
      in_space = false;
    }
    out += c;
  }
  return out;
}

/// Parse the strict one-line comma-separated keyword response.
inline std::vector<std::string> parse_keyword_response(
    const std::string& response, std::size_t max_keywords) {
  std::string line;
  for (const auto& l : split(response, '\n')) {
    if (!trim(l).empty()) {
      line = trim(l);
      break;
    }
  }
  std::vector<std::string> out;
  for (const auto& piece : split(line, ',')) {
    const std::string kw = normalize_keyword(piece);
    if (kw.empty()) continue;
    if (std::find(out.begin(), out.end(), kw) != out.end()) continue;
    out.push_back(kw);
    if (out.size() == max_keywords) break;
  }
  return out;
}

/// Condense profiles into keyword sets; one reprompt with a stricter
/// instruction before giving up.
inline std::vector<std::vector<std::string>> condense_keywords(
    const Dataset& ds, SubjectKind kind,
    const std::vector<std::string>& profiles, Gateway& gateway,
    const PromptLibrary& prompts, const PreferenceOptions& options) {
  const auto& tpl = prompts.get("condense_keywords");
  const char* kind_name = kind == SubjectKind::User ? "user" : "item";
  std::vector<std::vector<std::string>> keyword_sets(profiles.size());
  detail::parallel_for(profiles.size(), options.workers, [&](std::size_t idx) {
    const auto& id = kind == SubjectKind::User ? ds.user_ids[idx]
                                               : ds.item_ids[idx];
    PromptRequest r;
    r.system_text = tpl.system;
    r.user_text = PromptLibrary::render(
        tpl.user, {{"subject_kind", kind_name},
                   {"subject_id", id},
                   {"profile", profiles[idx]},
                   {"max_keywords", std::to_string(options.max_keywords)}});
    r.tag = std::string("keywords:") + kind_name + ":" + id;
    std::string response = gateway.complete(r);
    auto kws = parse_keyword_response(response, options.max_keywords);
    if (kws.empty()) {
      PromptRequest retry = r;
      retry.user_text +=
          "\n\nYour previous reply was unparseable. Reply with ONLY one "
          "comma-separated line of keywords.";
      response = gateway.complete(retry);
      kws = parse_keyword_response(response, options.max_keywords);
      if (kws.empty())
        throw ResponseParseError("keyword response unparseable for " + id,
                                 response);
    }
    keyword_sets[idx] = std::move(kws);
  });
  return keyword_sets;
}

/// F = profile ∥ " | " ∥ keywords; pooled vector per subject; projected rows
/// assembled in index order.
inline void embed_preferences(PreferenceKnowledge& kp, SubjectKind kind,
                              Gateway& gateway,
                              const PreferenceOptions& options) {
  const auto& profiles =
      kind == SubjectKind::User ? kp.user_profiles : kp.item_profiles;
  const auto& keywords =
      kind == SubjectKind::User ? kp.user_keywords : kp.item_keywords;
  Mat& pooled = kind == SubjectKind::User ? kp.user_pooled : kp.item_pooled;
  Mat& sem = kind == SubjectKind::User ? kp.user_sem : kp.item_sem;
  pooled = Mat(profiles.size(), kp.d_t);
  sem = Mat(profiles.size(), kp.d);
  detail::parallel_for(profiles.size(), options.workers, [&](std::size_t idx) {
    const std::string f_text =
        profiles[idx] + " | " + detail::keywords_csv(keywords[idx]);
    const auto t = gateway.embed_text(f_text);
    if (t.size() != kp.d_t)
      throw ProviderError("provider embedding dimension changed mid-run");
    std::copy(t.begin(), t.end(), pooled.row(idx));
    const auto row = kp.head.apply(t);
    std::copy(row.begin(), row.end(), sem.row(idx));
  });
}

/// Full K_p pipeline: profiles, keywords, pooled embeddings, projected rows.
inline PreferenceKnowledge generate_preference_knowledge(
    const Dataset& ds, Gateway& gateway, const PromptLibrary& prompts,
    const PreferenceOptions& options) {
  PreferenceKnowledge kp;
  kp.d = options.model_dim;
  kp.d_t = gateway.embedding_dim();
  if (kp.d_t == 0)
    throw UsageError("provider config must declare embedding_dim");
  Rng rng(derive_seed(options.seed, /*stream=*/0x9ead));
  kp.head = ProjectionHead::init(kp.d, kp.d_t, rng, options.head_hidden);

  kp.user_profiles =
      generate_profiles(ds, SubjectKind::User, gateway, prompts, options);
  kp.item_profiles =
      generate_profiles(ds, SubjectKind::Item, gateway, prompts, options);
  kp.user_keywords = condense_keywords(ds, SubjectKind::User, kp.user_profiles,
                                       gateway, prompts, options);
  kp.item_keywords = condense_keywords(ds, SubjectKind::Item, kp.item_profiles,
                                       gateway, prompts, options);
  embed_preferences(kp, SubjectKind::User, gateway, options);
  embed_preferences(kp, SubjectKind::Item, gateway, options);
  return kp;
}

// ---------------------------------------------------------------------------
// K_p artifact I/O
// Layout: header line, counts line, float32 sections (Ẽ_u, Ẽ_i, pooled T_u,
// T_i, projection head), then the text section of profiles/keywords as
// tab-separated lines.
// ---------------------------------------------------------------------------

inline void save_preference_knowledge(const PreferenceKnowledge& kp,
                                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write K_p artifact: " + path);
  out << "LLARD_KP v1\n";
  out << kp.user_profiles.size() << ' ' << kp.item_profiles.size() << ' '
      << kp.d << ' ' << kp.d_t << ' ' << (kp.head.has_hidden ? 1 : 0) << ' '
      << kp.head.hidden << '\n';
  write_f32(out, kp.user_sem);
  write_f32(out, kp.item_sem);
  write_f32(out, kp.user_pooled);
  write_f32(out, kp.item_pooled);
  if (kp.head.has_hidden) {
    write_f32(out, kp.head.w1);
    write_f32(out, std::span<const double>(kp.head.b1));
    write_f32(out, kp.head.w2);
  } else {
    write_f32(out, kp.head.w);
  }
  write_f32(out, std::span<const double>(kp.head.b));
  out << "TEXT\n";
  auto dump = [&out](char kind, const std::vector<std::string>& profiles,
                     const std::vector<std::vector<std::string>>& keywords) {
    for (std::size_t idx = 0; idx < profiles.size(); ++idx) {
      out << kind << '\t' << idx << '\t' << escape_tsv(profiles[idx]) << '\t'
          << escape_tsv(detail::keywords_csv(keywords[idx])) << '\n';
    }
  };
  dump('u', kp.user_profiles, kp.user_keywords);
  dump('i', kp.item_profiles, kp.item_keywords);
}

inline PreferenceKnowledge load_preference_knowledge(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open K_p artifact: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LLARD_KP v1")
    throw DataError(path + ": not a K_p artifact");
  std::size_t nu, ni, hidden;
  int has_hidden;
  PreferenceKnowledge kp;
  in >> nu >> ni >> kp.d >> kp.d_t >> has_hidden >> hidden;
  std::getline(in, line);
  kp.user_sem = Mat(nu, kp.d);
  kp.item_sem = Mat(ni, kp.d);
  kp.user_pooled = Mat(nu, kp.d_t);
  kp.item_pooled = Mat(ni, kp.d_t);
  read_f32(in, kp.user_sem);
  read_f32(in, kp.item_sem);
  read_f32(in, kp.user_pooled);
  read_f32(in, kp.item_pooled);
  kp.head.d = kp.d;
  kp.head.d_t = kp.d_t;
  kp.head.has_hidden = has_hidden != 0;
  kp.head.hidden = hidden;
  kp.head.b.assign(kp.d, 0.0);
  if (kp.head.has_hidden) {
    kp.head.w1 = Mat(hidden, kp.d_t);
    kp.head.b1.assign(hidden, 0.0);
    kp.head.w2 = Mat(kp.d, hidden);
    read_f32(in, kp.head.w1);
    read_f32(in, std::span<double>(kp.head.b1));
    read_f32(in, kp.head.w2);
  } else {
    kp.head.w = Mat(kp.d, kp.d_t);
    read_f32(in, kp.head.w);
  }
  read_f32(in, std::span<double>(kp.head.b));
  if (!std::getline(in, line) || line != "TEXT")
    throw DataError(path + ": missing TEXT section");
  kp.user_profiles.resize(nu);
  kp.item_profiles.resize(ni);
  kp.user_keywords.resize(nu);
  kp.item_keywords.resize(ni);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 4) throw DataError(path + ": malformed text row");
    const std::size_t idx = std::stoul(f[1]);
    auto& profiles = f[0] == "u" ? kp.user_profiles : kp.item_profiles;
    auto& keywords = f[0] == "u" ? kp.user_keywords : kp.item_keywords;
    profiles.at(idx) = unescape_tsv(f[2]);
    keywords.at(idx).clear();
    for (const auto& kw : split(unescape_tsv(f[3]), ','))
      if (!trim(kw).empty()) keywords.at(idx).push_back(trim(kw));
  }
  return kp;
}

}  // namespace llard
