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

#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "llard/common.hpp"

namespace llard {

// ---------------------------------------------------------------------------
// Records and catalog
// ---------------------------------------------------------------------------

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  std::optional<int> rating;          // 1..5 when present
  std::optional<std::int64_t> timestamp;  // seconds since epoch
};

/// Raw text catalog keyed by external ids; attached to a Dataset after
/// indexing. Comments are tied to a (user, item) pair via the
/// `comment:<item_id>` field qualifier in the catalog file.
struct RawCatalog {
  struct ItemText {
    std::string title, category, description;
  };
  std::unordered_map<std::string, ItemText> items;
  // user id -> (item id -> comment)
  std::unordered_map<std::string, std::unordered_map<std::string, std::string>>
      comments;
  bool empty() const { return items.empty() && comments.empty(); }
};

struct IndexedInteraction {
  std::uint32_t user;
  std::uint32_t item;
  std::optional<std::int64_t> timestamp;
};

using IndexPair = std::pair<std::uint32_t, std::uint32_t>;

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Indexed, split dataset. Immutable after finalize(); safe to share across
/// threads.
struct Dataset {
  std::vector<std::string> user_ids;  // index -> external id (sorted)
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;

  std::vector<IndexedInteraction> train, val, test;
  std::vector<IndexPair> noise_ledger;  // injected (u,i), subset of train

  struct Catalog {
    std::vector<std::string> title, category, description;  // per item index
    std::unordered_map<std::uint64_t, std::string> comment;  // (u<<32|i)
    bool present = false;
  } catalog;

  // Derived, built by finalize().
  std::vector<std::vector<std::uint32_t>> user_train_items;   // sorted asc
  std::vector<std::vector<std::uint32_t>> item_train_users;   // sorted asc
  std::vector<std::vector<std::uint32_t>> user_recent_items;  // recency order

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }

  static std::uint64_t pair_key(std::uint32_t u, std::uint32_t i) {
    return (static_cast<std::uint64_t>(u) << 32) | i;
  }

  bool in_train(std::uint32_t u, std::uint32_t i) const {
    const auto& items = user_train_items[u];
    return std::binary_search(items.begin(), items.end(), i);
  }

  const std::string* comment_on(std::uint32_t u, std::uint32_t i) const {
    const auto it = catalog.comment.find(pair_key(u, i));
    return it == catalog.comment.end() ? nullptr : &it->second;
  }

  /// Rebuild the derived adjacency lists; call after any mutation of train.
  void finalize() {
    user_train_items.assign(num_users(), {});
    item_train_users.assign(num_items(), {});
    std::vector<std::vector<std::pair<std::int64_t, std::uint32_t>>> recency(
        num_users());
    for (const auto& r : train) {
      user_train_items[r.user].push_back(r.item);
      item_train_users[r.item].push_back(r.user);
      // Missing timestamps sort oldest.
      recency[r.user].push_back(
          {r.timestamp.value_or(INT64_MIN), r.item});
    }
    for (auto& v : user_train_items) std::sort(v.begin(), v.end());
    for (auto& v : item_train_users) std::sort(v.begin(), v.end());
    user_recent_items.assign(num_users(), {});
    for (std::size_t u = 0; u < num_users(); ++u) {
      auto& rv = recency[u];
      std::stable_sort(rv.begin(), rv.end(),
                       [](const auto& a, const auto& b) {
                         if (a.first != b.first) return a.first > b.first;
                         return a.second < b.second;
                       });
      for (const auto& [ts, i] : rv) user_recent_items[u].push_back(i);
    }
  }
};

// ---------------------------------------------------------------------------
// TripleBatch
// ---------------------------------------------------------------------------

struct Triple {
  std::uint32_t user, pos, neg;
};

struct TripleBatch {
  std::vector<Triple> triples;
  std::size_t size() const { return triples.size(); }
};

// ---------------------------------------------------------------------------
// File ingestion
// ---------------------------------------------------------------------------

/// Parse one interaction file: `user_id \t item_id \t rating \t timestamp`,
/// one record per line; the last two fields may be empty or absent.
inline std::vector<InteractionRecord> read_interactions(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file: " + path);
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 2 || trim(fields[0]).empty() ||
        trim(fields[1]).empty()) {
      throw DataError(path + ": malformed line " + std::to_string(lineno) +
                      ": expected `user \\t item [\\t rating [\\t ts]]`");
    }
    InteractionRecord rec;
    rec.user_id = trim(fields[0]);
    rec.item_id = trim(fields[1]);
    if (fields.size() > 2 && !trim(fields[2]).empty()) {
      try {
        rec.rating = std::stoi(trim(fields[2]));
      } catch (const std::exception&) {
        throw DataError(path + ": malformed rating on line " +
                        std::to_string(lineno));
      }
      if (*rec.rating < 1 || *rec.rating > 5) {
        throw DataError(path + ": rating out of [1,5] on line " +
                        std::to_string(lineno));
      }
    }
    if (fields.size() > 3 && !trim(fields[3]).empty()) {
      try {
        rec.timestamp = std::stoll(trim(fields[3]));
      } catch (const std::exception&) {
        throw DataError(path + ": malformed timestamp on line " +
                        std::to_string(lineno));
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// Parse a text catalog: `kind(u|i) \t id \t field_name \t text`. Item fields
/// are title/category/description; user comments use `comment:<item_id>`.
inline RawCatalog read_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open catalog file: " + path);
  RawCatalog cat;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() < 4) {
      throw DataError(path + ": malformed catalog line " +
                      std::to_string(lineno));
    }
    const std::string kind = trim(fields[0]);
    const std::string id = trim(fields[1]);
    const std::string field = trim(fields[2]);
    const std::string text = unescape_tsv(fields[3]);
    if (kind == "i") {
      auto& it = cat.items[id];
      if (field == "title") it.title = text;
      else if (field == "category") it.category = text;
      else if (field == "description") it.description = text;
      else
        throw DataError(path + ": unknown item field `" + field +
                        "` on line " + std::to_string(lineno));
    } else if (kind == "u") {
      if (starts_with(field, "comment:")) {
        cat.comments[id][field.substr(8)] = text;
      } else {
        throw DataError(path + ": unknown user field `" + field +
                        "` on line " + std::to_string(lineno));
      }
    } else {
      throw DataError(path + ": kind must be `u` or `i` on line " +
                      std::to_string(lineno));
    }
  }
  return cat;
}

// ---------------------------------------------------------------------------
// k-core filtering
// ---------------------------------------------------------------------------

/// Remove records rated below min_rating (unrated records are kept), then
/// peel users/items until every remaining one has degree >= k. Output is the
/// unique maximal fixpoint; record order is preserved.
inline std::vector<InteractionRecord> kcore_filter(
    std::vector<InteractionRecord> records, int k,
    std::optional<int> min_rating = std::nullopt) {
  if (k < 1) throw DataError("kcore_filter: k must be >= 1");
  if (min_rating) {
    std::erase_if(records, [&](const InteractionRecord& r) {
      return r.rating && *r.rating < *min_rating;
    });
  }

  // Degrees count distinct neighbors.
  std::unordered_map<std::string, std::set<std::string>> user_adj, item_adj;
  for (const auto& r : records) {
    user_adj[r.user_id].insert(r.item_id);
    item_adj[r.item_id].insert(r.user_id);
  }

  std::deque<std::pair<bool, std::string>> queue;  // (is_user, id)
  std::unordered_set<std::string> dead_users, dead_items;
  for (const auto& [u, adj] : user_adj)
    if (adj.size() < static_cast<std::size_t>(k)) queue.push_back({true, u});
  for (const auto& [i, adj] : item_adj)
    if (adj.size() < static_cast<std::size_t>(k)) queue.push_back({false, i});

  while (!queue.empty()) {
    auto [is_user, id] = queue.front();
    queue.pop_front();
    if (is_user) {
      if (!dead_users.insert(id).second) continue;
      for (const auto& i : user_adj[id]) {
        if (dead_items.count(i)) continue;
        auto& adj = item_adj[i];
        adj.erase(id);
        if (adj.size() < static_cast<std::size_t>(k))
          queue.push_back({false, i});
      }
    } else {
      if (!dead_items.insert(id).second) continue;
      for (const auto& u : item_adj[id]) {
        if (dead_users.count(u)) continue;
        auto& adj = user_adj[u];
        adj.erase(id);
        if (adj.size() < static_cast<std::size_t>(k))
          queue.push_back({true, u});
      }
    }
  }

  std::erase_if(records, [&](const InteractionRecord& r) {
    return dead_users.count(r.user_id) || dead_items.count(r.item_id);
  });
  return records;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitRatios {
  int train = 3, val = 1, test = 1;
};

/// Per-user random partition into train/val/test proportions. Val and test
/// sizes round to the nearest integer; train takes the remainder and never
/// drops below one interaction per user.
inline Dataset split_dataset(const std::vector<InteractionRecord>& records,
                             SplitRatios ratios, std::uint64_t seed,
                             const RawCatalog* raw_catalog = nullptr) {
  if (records.empty())
    throw DataError("split_dataset: no records after filtering");

  Dataset ds;
  {
    std::set<std::string> users, items;
    for (const auto& r : records) {
      users.insert(r.user_id);
      items.insert(r.item_id);
    }
    ds.user_ids.assign(users.begin(), users.end());
    ds.item_ids.assign(items.begin(), items.end());
    for (std::uint32_t i = 0; i < ds.user_ids.size(); ++i)
      ds.user_index[ds.user_ids[i]] = i;
    for (std::uint32_t i = 0; i < ds.item_ids.size(); ++i)
      ds.item_index[ds.item_ids[i]] = i;
  }

  // Collapse duplicate (u,i) pairs, keeping the latest timestamp.
  std::map<IndexPair, std::optional<std::int64_t>> uniq;
  for (const auto& r : records) {
    const IndexPair p{ds.user_index.at(r.user_id), ds.item_index.at(r.item_id)};
    auto [it, inserted] = uniq.emplace(p, r.timestamp);
    if (!inserted && r.timestamp &&
        (!it->second || *r.timestamp > *it->second)) {
      it->second = r.timestamp;
    }
  }
  std::vector<std::vector<IndexedInteraction>> per_user(ds.user_ids.size());
  for (const auto& [p, ts] : uniq)
    per_user[p.first].push_back({p.first, p.second, ts});

  const double total =
      static_cast<double>(ratios.train + ratios.val + ratios.test);
  Rng rng(derive_seed(seed, /*stream=*/0x5b117));
  for (std::uint32_t u = 0; u < per_user.size(); ++u) {
    auto& rows = per_user[u];  // already sorted by item index
    rng.shuffle(rows);
    const std::size_t n = rows.size();
    auto rounded = [&](int part) {
      return static_cast<std::size_t>(
          std::floor(static_cast<double>(n) * part / total + 0.5));
    };
    std::size_t n_val = rounded(ratios.val);
    std::size_t n_test = rounded(ratios.test);
    // Keep at least one train interaction per user.
    while (n_val + n_test + 1 > n) {
      if (n_val >= n_test && n_val > 0) --n_val;
      else if (n_test > 0) --n_test;
      else break;
    }
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t idx = 0; idx < n; ++idx) {
      if (idx < n_train) ds.train.push_back(rows[idx]);
      else if (idx < n_train + n_val) ds.val.push_back(rows[idx]);
      else ds.test.push_back(rows[idx]);
    }
  }
  auto by_pair = [](const IndexedInteraction& a, const IndexedInteraction& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  };
  std::sort(ds.train.begin(), ds.train.end(), by_pair);
  std::sort(ds.val.begin(), ds.val.end(), by_pair);
  std::sort(ds.test.begin(), ds.test.end(), by_pair);

  if (raw_catalog && !raw_catalog->empty()) {
    auto& cat = ds.catalog;
    cat.present = true;
    cat.title.resize(ds.num_items());
    cat.category.resize(ds.num_items());
    cat.description.resize(ds.num_items());
    for (const auto& [id, text] : raw_catalog->items) {
      const auto it = ds.item_index.find(id);
      if (it == ds.item_index.end()) continue;  // filtered out
      cat.title[it->second] = text.title;
      cat.category[it->second] = text.category;
      cat.description[it->second] = text.description;
    }
    for (const auto& [uid, m] : raw_catalog->comments) {
      const auto uit = ds.user_index.find(uid);
      if (uit == ds.user_index.end()) continue;
      for (const auto& [iid, text] : m) {
        const auto iit = ds.item_index.find(iid);
        if (iit == ds.item_index.end()) continue;
        cat.comment[Dataset::pair_key(uit->second, iit->second)] = text;
      }
    }
  }

  ds.finalize();
  return ds;
}

// ---------------------------------------------------------------------------
// Adversarial noise injection
// ---------------------------------------------------------------------------

/// Add floor(ratio * |train|) uniformly sampled absent (u,i) pairs to train;
/// val/test are untouched and the injected pairs are recorded in the ledger.
inline Dataset inject_noise(const Dataset& dataset, double ratio,
                            std::uint64_t seed) {
  if (ratio <= 0.0 || ratio > 1.0)
    throw DataError("inject_noise: ratio must be in (0,1]");
  Dataset ds = dataset;
  const std::size_t want =
      static_cast<std::size_t>(ratio * static_cast<double>(ds.train.size()));

  std::unordered_set<std::uint64_t> taken;
  for (const auto& r : ds.train) taken.insert(Dataset::pair_key(r.user, r.item));
  for (const auto& r : ds.val) taken.insert(Dataset::pair_key(r.user, r.item));
  for (const auto& r : ds.test) taken.insert(Dataset::pair_key(r.user, r.item));

  const std::uint64_t capacity =
      static_cast<std::uint64_t>(ds.num_users()) * ds.num_items();
  if (capacity - taken.size() < want) {
    throw DataError("inject_noise: not enough absent (u,i) pairs for ratio " +
                    std::to_string(ratio));
  }

  Rng rng(derive_seed(seed, /*stream=*/0x401e));
  std::vector<IndexPair> injected;
  injected.reserve(want);
  while (injected.size() < want) {
    const auto u = static_cast<std::uint32_t>(rng.index(ds.num_users()));
    const auto i = static_cast<std::uint32_t>(rng.index(ds.num_items()));
    if (!taken.insert(Dataset::pair_key(u, i)).second) continue;
    injected.push_back({u, i});
  }
  for (const auto& [u, i] : injected) {
    ds.train.push_back({u, i, std::nullopt});
    ds.noise_ledger.push_back({u, i});
  }
  std::sort(ds.train.begin(), ds.train.end(),
            [](const IndexedInteraction& a, const IndexedInteraction& b) {
              return std::tie(a.user, a.item) < std::tie(b.user, b.item);
            });
  ds.finalize();
  return ds;
}

inline void write_ledger(const std::string& path,
                         const std::vector<IndexPair>& ledger) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write ledger: " + path);
  for (const auto& [u, i] : ledger) out << u << '\t' << i << '\n';
}

inline std::vector<IndexPair> read_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ledger: " + path);
  std::vector<IndexPair> ledger;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 2) throw DataError("malformed ledger line in " + path);
    ledger.push_back({static_cast<std::uint32_t>(std::stoul(f[0])),
                      static_cast<std::uint32_t>(std::stoul(f[1]))});
  }
  return ledger;
}

// ---------------------------------------------------------------------------
// Pairwise triple sampling
// ---------------------------------------------------------------------------

/// Draw batch_size (u, i, j) triples: (u,i) uniform over train, j uniform
/// over items outside u's train positives.
inline TripleBatch sample_triples(const Dataset& ds, std::size_t batch_size,
                                  Rng& rng) {
  if (ds.train.empty()) throw DataError("sample_triples: train set is empty");
  bool any_open = false;
  for (const auto& items : ds.user_train_items) {
    if (items.size() < ds.num_items()) {
      any_open = true;
      break;
    }
  }
  if (!any_open)
    throw DataError("sample_triples: every user's positives cover all items");

  TripleBatch batch;
  batch.triples.reserve(batch_size);
  while (batch.triples.size() < batch_size) {
    const auto& rec = ds.train[rng.index(ds.train.size())];
    const auto& pos = ds.user_train_items[rec.user];
    if (pos.size() >= ds.num_items()) continue;  // saturated user: resample
    std::uint32_t j;
    do {
      j = static_cast<std::uint32_t>(rng.index(ds.num_items()));
    } while (std::binary_search(pos.begin(), pos.end(), j));
    batch.triples.push_back({rec.user, rec.item, j});
  }
  return batch;
}

// Convenience overload matching the seed-based contract.
inline TripleBatch sample_triples(const Dataset& ds, std::size_t batch_size,
                                  std::uint64_t seed) {
  Rng rng(derive_seed(seed, /*stream=*/0x7319));
  return sample_triples(ds, batch_size, rng);
}

// ---------------------------------------------------------------------------
// Dataset artifact I/O (deterministic text format)
// ---------------------------------------------------------------------------

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset artifact: " + path);
  out << "LLARD_DATASET v1\n";
  out << ds.num_users() << ' ' << ds.num_items() << ' ' << ds.train.size()
      << ' ' << ds.val.size() << ' ' << ds.test.size() << ' '
      << ds.noise_ledger.size() << ' ' << (ds.catalog.present ? 1 : 0) << '\n';
  for (const auto& id : ds.user_ids) out << id << '\n';
  for (const auto& id : ds.item_ids) out << id << '\n';
  auto dump = [&out](const std::vector<IndexedInteraction>& rows) {
    for (const auto& r : rows) {
      out << r.user << '\t' << r.item << '\t';
      if (r.timestamp) out << *r.timestamp;
      out << '\n';
    }
  };
  dump(ds.train);
  dump(ds.val);
  dump(ds.test);
  for (const auto& [u, i] : ds.noise_ledger) out << u << '\t' << i << '\n';
  if (ds.catalog.present) {
    for (std::size_t i = 0; i < ds.num_items(); ++i) {
      out << escape_tsv(ds.catalog.title[i]) << '\t'
          << escape_tsv(ds.catalog.category[i]) << '\t'
          << escape_tsv(ds.catalog.description[i]) << '\n';
    }
    out << ds.catalog.comment.size() << '\n';
    std::map<std::uint64_t, std::string> ordered(ds.catalog.comment.begin(),
                                                 ds.catalog.comment.end());
    for (const auto& [key, text] : ordered) {
      out << (key >> 32) << '\t' << (key & 0xffffffffu) << '\t'
          << escape_tsv(text) << '\n';
    }
  }
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset artifact: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LLARD_DATASET v1")
    throw DataError(path + ": not a dataset artifact");
  std::size_t nu, ni, ntr, nva, nte, nled;
  int has_cat;
  in >> nu >> ni >> ntr >> nva >> nte >> nled >> has_cat;
  std::getline(in, line);
  Dataset ds;
  ds.user_ids.resize(nu);
  ds.item_ids.resize(ni);
  for (auto& id : ds.user_ids)
    if (!std::getline(in, id)) throw DataError(path + ": truncated users");
  for (auto& id : ds.item_ids)
    if (!std::getline(in, id)) throw DataError(path + ": truncated items");
  for (std::uint32_t i = 0; i < nu; ++i) ds.user_index[ds.user_ids[i]] = i;
  for (std::uint32_t i = 0; i < ni; ++i) ds.item_index[ds.item_ids[i]] = i;
  auto read_rows = [&](std::vector<IndexedInteraction>& rows, std::size_t n) {
    rows.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (!std::getline(in, line))
        throw DataError(path + ": truncated interactions");
      const auto f = split(line, '\t');
      if (f.size() < 2) throw DataError(path + ": malformed interaction row");
      IndexedInteraction rec{static_cast<std::uint32_t>(std::stoul(f[0])),
                             static_cast<std::uint32_t>(std::stoul(f[1])),
                             std::nullopt};
      if (f.size() > 2 && !f[2].empty()) rec.timestamp = std::stoll(f[2]);
      if (rec.user >= nu || rec.item >= ni)
        throw DataError(path + ": interaction index out of range");
      rows.push_back(rec);
    }
  };
  read_rows(ds.train, ntr);
  read_rows(ds.val, nva);
  read_rows(ds.test, nte);
  for (std::size_t r = 0; r < nled; ++r) {
    if (!std::getline(in, line)) throw DataError(path + ": truncated ledger");
    const auto f = split(line, '\t');
    ds.noise_ledger.push_back({static_cast<std::uint32_t>(std::stoul(f[0])),
                               static_cast<std::uint32_t>(std::stoul(f[1]))});
  }
  if (has_cat) {
    auto& cat = ds.catalog;
    cat.present = true;
    cat.title.resize(ni);
    cat.category.resize(ni);
    cat.description.resize(ni);
    for (std::size_t i = 0; i < ni; ++i) {
      if (!std::getline(in, line)) throw DataError(path + ": truncated catalog");
      const auto f = split(line, '\t');
      if (f.size() != 3) throw DataError(path + ": malformed catalog row");
      cat.title[i] = unescape_tsv(f[0]);
      cat.category[i] = unescape_tsv(f[1]);
      cat.description[i] = unescape_tsv(f[2]);
    }
    if (!std::getline(in, line)) throw DataError(path + ": truncated comments");
    const std::size_t ncom = std::stoul(line);
    for (std::size_t r = 0; r < ncom; ++r) {
      if (!std::getline(in, line))
        throw DataError(path + ": truncated comments");
      const auto f = split(line, '\t');
      if (f.size() != 3) throw DataError(path + ": malformed comment row");
      cat.comment[Dataset::pair_key(std::stoul(f[0]), std::stoul(f[1]))] =
          unescape_tsv(f[2]);
    }
  }
  ds.finalize();
  return ds;
}

}  // namespace llard
