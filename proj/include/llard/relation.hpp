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

#include <map>
#include <set>
#include <string>
#include <vector>

#include "llard/graph.hpp"
#include "llard/preference.hpp"

namespace llard {

enum class PreferenceRating { High, Medium, Low };

inline const char* to_string(PreferenceRating r) {
  switch (r) {
    case PreferenceRating::High: return "High";
    case PreferenceRating::Medium: return "Medium";
    case PreferenceRating::Low: return "Low";
  }
  return "Medium";
}

struct RatedNeighborhood {
  std::uint32_t user = 0;
  std::vector<std::pair<std::uint32_t, PreferenceRating>> entries;
};

/// The three LLM-derived edge sets plus per-user reasoning transcripts.
struct RelationKnowledge {
  std::set<IndexPair> noise_edges;                        // (u, i), ⊆ train
  std::set<std::pair<std::uint32_t, std::uint32_t>> collab_edges;  // u < u'
  std::set<IndexPair> interest_edges;                     // (u, i), ∉ train
  std::map<std::uint32_t, std::string> transcripts;
  std::size_t unknown_id_warnings = 0;
};

struct RelationOptions {
  std::size_t max_first_hop = 50;   // rated items per user
  std::size_t max_second_hop = 20;  // collaborative user candidates
  std::size_t max_third_hop = 30;   // interest item candidates
  int workers = 4;
};

namespace detail {

inline std::string keyword_csv_for(const PreferenceKnowledge& kp,
                                   SubjectKind kind, std::uint32_t index) {
  const auto& sets =
      kind == SubjectKind::User ? kp.user_keywords : kp.item_keywords;
  return keywords_csv(sets[index]);
}

/// Collect response lines that name candidate ids; everything else is
/// ignored (with a warning count for unknown ids).
inline std::vector<std::uint32_t> parse_id_lines(
    const std::string& response,
    const std::map<std::string, std::uint32_t>& candidates,
    std::size_t* unknown_warnings) {
  std::vector<std::uint32_t> out;
  std::set<std::uint32_t> seen;
  for (const auto& raw : split(response, '\n')) {
    std::string line = trim(raw);
    if (starts_with(line, "- ")) line = trim(line.substr(2));
    if (line.empty() || to_lower(line) == "none") continue;
    const auto it = candidates.find(line);
    if (it == candidates.end()) {
      if (unknown_warnings) ++*unknown_warnings;
      continue;
    }
    if (seen.insert(it->second).second) out.push_back(it->second);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Step 1: preference ratings over the first-hop neighborhood
// ---------------------------------------------------------------------------

/// Parse `item_id: High|Medium|Low` lines; unmentioned candidates default to
/// Medium, unknown ids are counted and ignored.
inline RatedNeighborhood parse_rating_response(
    const std::string& response, std::uint32_t user,
    const std::vector<std::uint32_t>& candidates, const Dataset& ds,
    std::size_t* unknown_warnings, bool* any_valid_line = nullptr) {
  std::map<std::string, std::uint32_t> by_id;
  for (const auto i : candidates) by_id[ds.item_ids[i]] = i;
  std::map<std::uint32_t, PreferenceRating> ratings;
  bool any = false;
  for (const auto& raw : split(response, '\n')) {
    std::string line = trim(raw);
    if (starts_with(line, "- ")) line = trim(line.substr(2));
    const auto colon = line.rfind(':');
    if (colon == std::string::npos) continue;
    const std::string id = trim(line.substr(0, colon));
    const std::string tier = to_lower(trim(line.substr(colon + 1)));
    PreferenceRating rating;
    if (tier == "high") rating = PreferenceRating::High;
    else if (tier == "medium") rating = PreferenceRating::Medium;
    else if (tier == "low") rating = PreferenceRating::Low;
    else continue;
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      if (unknown_warnings) ++*unknown_warnings;
      continue;
    }
    any = true;
    ratings[it->second] = rating;
  }
  if (any_valid_line) *any_valid_line = any;
  RatedNeighborhood rated;
  rated.user = user;
  for (const auto i : candidates) {
    const auto it = ratings.find(i);
    rated.entries.push_back(
        {i, it == ratings.end() ? PreferenceRating::Medium : it->second});
  }
  return rated;
}

inline RatedNeighborhood rate_neighborhood(
    std::uint32_t user, const PreferenceKnowledge& kp, const Dataset& ds,
    Gateway& gateway, const PromptLibrary& prompts,
    const RelationOptions& options, std::string* transcript,
    std::size_t* unknown_warnings) {
  if (ds.user_train_items[user].empty())
    throw DataError("rate_neighborhood: user has no train interactions");
  std::vector<std::uint32_t> candidates = ds.user_recent_items[user];
  if (candidates.size() > options.max_first_hop)
    candidates.resize(options.max_first_hop);

  std::string candidate_lines;
  for (const auto i : candidates) {
    candidate_lines +=
        candidate_line(ds.item_ids[i],
                       detail::keyword_csv_for(kp, SubjectKind::Item, i)) +
        "\n";
  }
  const auto& tpl = prompts.get("rate_neighborhood");
  PromptRequest r;
  r.system_text = tpl.system;
  r.user_text = PromptLibrary::render(
      tpl.user,
      {{"subject_id", ds.user_ids[user]},
       {"profile", kp.user_profiles[user]},
       {"keywords", detail::keyword_csv_for(kp, SubjectKind::User, user)},
       {"candidates", trim(candidate_lines)}});
  r.tag = "rate:" + ds.user_ids[user];

  std::string response = gateway.complete(r);
  bool any_valid = false;
  auto rated = parse_rating_response(response, user, candidates, ds,
                                     unknown_warnings, &any_valid);
  if (!any_valid && !candidates.empty()) {
    PromptRequest retry = r;
    retry.user_text +=
        "\n\nYour previous reply was unparseable. Reply ONLY with lines of "
        "the form `item_id: High|Medium|Low`.";
    response = gateway.complete(retry);
    rated = parse_rating_response(response, user, candidates, ds,
                                  unknown_warnings, &any_valid);
    if (!any_valid)
      throw ResponseParseError(
          "rating response unparseable for " + ds.user_ids[user], response);
  }
  if (transcript) {
    *transcript += "== step 1: ratings ==\n" + r.user_text + "\n-- response --\n" +
                   response + "\n";
  }
  return rated;
}

// ---------------------------------------------------------------------------
// Step 2: noise identification among Low-rated items
// ---------------------------------------------------------------------------

inline std::set<std::uint32_t> identify_noise(
    std::uint32_t user, const RatedNeighborhood& rated,
    const PreferenceKnowledge& kp, const Dataset& ds, Gateway& gateway,
    const PromptLibrary& prompts, std::string* transcript,
    std::size_t* unknown_warnings) {
  std::vector<std::uint32_t> low;
  std::string rated_lines;
  for (const auto& [i, tier] : rated.entries) {
    rated_lines += ds.item_ids[i] + ": " + to_string(tier) + "\n";
    if (tier == PreferenceRating::Low) low.push_back(i);
  }
  if (low.empty()) return {};  // empty candidate set: no LLM call

  std::map<std::string, std::uint32_t> by_id;
  std::string candidate_lines;
  for (const auto i : low) {
    by_id[ds.item_ids[i]] = i;
    candidate_lines +=
        candidate_line(ds.item_ids[i],
                       detail::keyword_csv_for(kp, SubjectKind::Item, i)) +
        "\n";
  }
  const auto& tpl = prompts.get("identify_noise");
  PromptRequest r;
  r.system_text = tpl.system;
  r.user_text = PromptLibrary::render(
      tpl.user,
      {{"subject_id", ds.user_ids[user]},
       {"keywords", detail::keyword_csv_for(kp, SubjectKind::User, user)},
       {"rated", trim(rated_lines)},
       {"candidates", trim(candidate_lines)}});
  r.tag = "noise:" + ds.user_ids[user];
  const std::string response = gateway.complete(r);
  if (transcript) {
    *transcript += "== step 2: noise ==\n" + r.user_text + "\n-- response --\n" +
                   response + "\n";
  }
  const auto picked = detail::parse_id_lines(response, by_id, unknown_warnings);
  return {picked.begin(), picked.end()};
}

// ---------------------------------------------------------------------------
// Step 3: collaborative enhancement over second-hop users
// ---------------------------------------------------------------------------

/// Second-hop candidates: users sharing High-rated items, ranked by the
/// number of shared High items (ties: ascending index), capped.
inline std::vector<std::uint32_t> second_hop_candidates(
    std::uint32_t user, const RatedNeighborhood& rated, const Dataset& ds,
    std::size_t cap) {
  std::map<std::uint32_t, std::size_t> shared;
  for (const auto& [i, tier] : rated.entries) {
    if (tier != PreferenceRating::High) continue;
    for (const auto other : ds.item_train_users[i]) {
      if (other != user) ++shared[other];
    }
  }
  std::vector<std::pair<std::size_t, std::uint32_t>> ranked;
  for (const auto& [other, count] : shared) ranked.push_back({count, other});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (const auto& [count, other] : ranked) {
    out.push_back(other);
    if (out.size() == cap) break;
  }
  return out;
}

inline std::set<std::uint32_t> collaborative_enhancement(
    std::uint32_t user, const RatedNeighborhood& rated,
    const PreferenceKnowledge& kp, const Dataset& ds, Gateway& gateway,
    const PromptLibrary& prompts, const RelationOptions& options,
    std::string* transcript, std::size_t* unknown_warnings) {
  const auto candidates =
      second_hop_candidates(user, rated, ds, options.max_second_hop);
  if (candidates.empty()) return {};

  std::map<std::string, std::uint32_t> by_id;
  std::string candidate_lines, rated_lines;
  for (const auto& [i, tier] : rated.entries)
    rated_lines += ds.item_ids[i] + ": " + to_string(tier) + "\n";
  for (const auto other : candidates) {
    by_id[ds.user_ids[other]] = other;
    candidate_lines +=
        candidate_line(ds.user_ids[other],
                       detail::keyword_csv_for(kp, SubjectKind::User, other)) +
        "\n";
  }
  const auto& tpl = prompts.get("collaborative_enhancement");
  PromptRequest r;
  r.system_text = tpl.system;
  r.user_text = PromptLibrary::render(
      tpl.user,
      {{"subject_id", ds.user_ids[user]},
       {"keywords", detail::keyword_csv_for(kp, SubjectKind::User, user)},
       {"rated", trim(rated_lines)},
       {"candidates", trim(candidate_lines)}});
  r.tag = "collab:" + ds.user_ids[user];
  const std::string response = gateway.complete(r);
  if (transcript) {
    *transcript += "== step 3: collaboration ==\n" + r.user_text +
                   "\n-- response --\n" + response + "\n";
  }
  const auto picked = detail::parse_id_lines(response, by_id, unknown_warnings);
  return {picked.begin(), picked.end()};
}

// ---------------------------------------------------------------------------
// Step 4: interest exploration over third-hop items
// ---------------------------------------------------------------------------

/// Third-hop candidates: train items of the selected collaborative users,
/// minus the user's own first hop; ranked by how many of those users hold
/// the item (ties: ascending index), capped.
inline std::vector<std::uint32_t> third_hop_candidates(
    std::uint32_t user, const std::set<std::uint32_t>& collab_users,
    const Dataset& ds, std::size_t cap) {
  const auto& first_hop = ds.user_train_items[user];
  std::map<std::uint32_t, std::size_t> freq;
  for (const auto other : collab_users) {
    for (const auto i : ds.user_train_items[other]) {
      if (std::binary_search(first_hop.begin(), first_hop.end(), i)) continue;
      ++freq[i];
    }
  }
  std::vector<std::pair<std::size_t, std::uint32_t>> ranked;
  for (const auto& [i, count] : freq) ranked.push_back({count, i});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (const auto& [count, i] : ranked) {
    out.push_back(i);
    if (out.size() == cap) break;
  }
  return out;
}

inline std::set<std::uint32_t> explore_interests(
    std::uint32_t user, const std::set<std::uint32_t>& collab_users,
    const PreferenceKnowledge& kp, const Dataset& ds, Gateway& gateway,
    const PromptLibrary& prompts, const RelationOptions& options,
    std::string* transcript, std::size_t* unknown_warnings) {
  const auto candidates =
      third_hop_candidates(user, collab_users, ds, options.max_third_hop);
  if (candidates.empty()) return {};

  std::map<std::string, std::uint32_t> by_id;
  std::string candidate_lines, prior;
  for (const auto other : collab_users) {
    if (!prior.empty()) prior += ", ";
    prior += ds.user_ids[other];
  }
  for (const auto i : candidates) {
    by_id[ds.item_ids[i]] = i;
    candidate_lines +=
        candidate_line(ds.item_ids[i],
                       detail::keyword_csv_for(kp, SubjectKind::Item, i)) +
        "\n";
  }
  const auto& tpl = prompts.get("explore_interests");
  PromptRequest r;
  r.system_text = tpl.system;
  r.user_text = PromptLibrary::render(
      tpl.user,
      {{"subject_id", ds.user_ids[user]},
       {"keywords", detail::keyword_csv_for(kp, SubjectKind::User, user)},
       {"prior", prior.empty() ? "none" : prior},
       {"candidates", trim(candidate_lines)}});
  r.tag = "interests:" + ds.user_ids[user];
  const std::string response = gateway.complete(r);
  if (transcript) {
    *transcript += "== step 4: interests ==\n" + r.user_text +
                   "\n-- response --\n" + response + "\n";
  }
  const auto picked = detail::parse_id_lines(response, by_id, unknown_warnings);
  return {picked.begin(), picked.end()};
}

// ---------------------------------------------------------------------------
// Full pipeline and K_r assembly
// ---------------------------------------------------------------------------

inline RelationKnowledge build_relation_knowledge(
    const Dataset& ds, const PreferenceKnowledge& kp, Gateway& gateway,
    const PromptLibrary& prompts, const RelationOptions& options) {
  const std::size_t n = ds.num_users();
  struct PerUser {
    std::set<std::uint32_t> noise, collab, interests;
    std::string transcript;
    std::size_t warnings = 0;
    bool ran = false;
  };
  std::vector<PerUser> results(n);
  detail::parallel_for(n, options.workers, [&](std::size_t u32) {
    const auto user = static_cast<std::uint32_t>(u32);
    if (ds.user_train_items[user].empty()) return;
    auto& out = results[user];
    out.ran = true;
    const auto rated =
        rate_neighborhood(user, kp, ds, gateway, prompts, options,
                          &out.transcript, &out.warnings);
    out.noise = identify_noise(user, rated, kp, ds, gateway, prompts,
                               &out.transcript, &out.warnings);
    out.collab =
        collaborative_enhancement(user, rated, kp, ds, gateway, prompts,
                                  options, &out.transcript, &out.warnings);
    out.interests =
        explore_interests(user, out.collab, kp, ds, gateway, prompts, options,
                          &out.transcript, &out.warnings);
  });

  RelationKnowledge kr;
  for (std::uint32_t user = 0; user < n; ++user) {
    const auto& r = results[user];
    if (!r.ran) continue;
    for (const auto i : r.noise) kr.noise_edges.insert({user, i});
    for (const auto other : r.collab)
      kr.collab_edges.insert({std::min(user, other), std::max(user, other)});
    for (const auto i : r.interests) kr.interest_edges.insert({user, i});
    kr.transcripts[user] = r.transcript;
    kr.unknown_id_warnings += r.warnings;
  }
  return kr;
}

/// Validate K_r invariants against a dataset.
inline void validate_relation_knowledge(const RelationKnowledge& kr,
                                        const Dataset& ds) {
  for (const auto& [u, i] : kr.noise_edges) {
    if (u >= ds.num_users() || i >= ds.num_items())
      throw DataError("K_r noise edge index out of range");
    if (!ds.in_train(u, i))
      throw DataError("K_r noise edge is not a train edge");
  }
  for (const auto& [a, b] : kr.collab_edges) {
    if (a >= ds.num_users() || b >= ds.num_users())
      throw DataError("K_r collab edge index out of range");
    if (a == b) throw DataError("K_r collab edge joins a user with itself");
  }
  for (const auto& [u, i] : kr.interest_edges) {
    if (u >= ds.num_users() || i >= ds.num_items())
      throw DataError("K_r interest edge index out of range");
    if (ds.in_train(u, i))
      throw DataError("K_r interest edge already exists in train");
  }
}

/// Enriched graph: (E \ E_noise) ∪ E_collab ∪ E_interests, normalized.
inline InteractionGraph build_enriched_graph(const Dataset& ds,
                                             const RelationKnowledge& kr) {
  validate_relation_knowledge(kr, ds);
  const auto offset = static_cast<std::uint32_t>(ds.num_users());
  std::vector<GraphEdge> edges;
  for (const auto& r : ds.train) {
    if (kr.noise_edges.count({r.user, r.item})) continue;
    edges.push_back({r.user, offset + r.item});
  }
  for (const auto& [a, b] : kr.collab_edges) edges.push_back({a, b});
  for (const auto& [u, i] : kr.interest_edges)
    edges.push_back({u, offset + i});
  return InteractionGraph(ds.num_users(), ds.num_items(), edges);
}

// ---------------------------------------------------------------------------
// K_r artifact I/O: header, three line-per-edge sections, then transcripts
// as length-prefixed UTF-8 blocks keyed by user index.
// ---------------------------------------------------------------------------

inline void save_relation_knowledge(const RelationKnowledge& kr,
                                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write K_r artifact: " + path);
  out << "LLARD_KR v1\n";
  out << "NOISE " << kr.noise_edges.size() << '\n';
  for (const auto& [u, i] : kr.noise_edges) out << u << '\t' << i << '\n';
  out << "COLLAB " << kr.collab_edges.size() << '\n';
  for (const auto& [a, b] : kr.collab_edges) out << a << '\t' << b << '\n';
  out << "INTERESTS " << kr.interest_edges.size() << '\n';
  for (const auto& [u, i] : kr.interest_edges) out << u << '\t' << i << '\n';
  out << "TRANSCRIPTS " << kr.transcripts.size() << '\n';
  for (const auto& [user, text] : kr.transcripts) {
    out << user << '\n' << text.size() << '\n';
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
}

inline RelationKnowledge load_relation_knowledge(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open K_r artifact: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LLARD_KR v1")
    throw DataError(path + ": not a K_r artifact");
  RelationKnowledge kr;
  auto read_section = [&](const std::string& name) {
    if (!std::getline(in, line) || !starts_with(line, name + " "))
      throw DataError(path + ": missing section " + name);
    return std::stoul(line.substr(name.size() + 1));
  };
  auto read_pairs = [&](std::size_t count, auto insert) {
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw DataError(path + ": truncated edges");
      const auto f = split(line, '\t');
      if (f.size() != 2) throw DataError(path + ": malformed edge line");
      insert(static_cast<std::uint32_t>(std::stoul(f[0])),
             static_cast<std::uint32_t>(std::stoul(f[1])));
    }
  };
  read_pairs(read_section("NOISE"), [&](std::uint32_t u, std::uint32_t i) {
    kr.noise_edges.insert({u, i});
  });
  read_pairs(read_section("COLLAB"), [&](std::uint32_t a, std::uint32_t b) {
    kr.collab_edges.insert({a, b});
  });
  read_pairs(read_section("INTERESTS"), [&](std::uint32_t u, std::uint32_t i) {
    kr.interest_edges.insert({u, i});
  });
  const std::size_t n_transcripts = read_section("TRANSCRIPTS");
  for (std::size_t k = 0; k < n_transcripts; ++k) {
    if (!std::getline(in, line))
      throw DataError(path + ": truncated transcripts");
    const auto user = static_cast<std::uint32_t>(std::stoul(line));
    if (!std::getline(in, line))
      throw DataError(path + ": truncated transcripts");
    const std::size_t len = std::stoul(line);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len)))
      throw DataError(path + ": truncated transcript body");
    kr.transcripts[user] = std::move(text);
  }
  return kr;
}

}  // namespace llard
