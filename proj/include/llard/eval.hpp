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

// Full-rank ranking evaluation: every non-interacted item is a candidate,
// Recall@N and binary-gain NDCG@N averaged over users with test items,
// plus cold-start frequency-quantile grouping.

#pragma once

#include <map>
#include <numeric>
#include <set>

#include "llard/model.hpp"
#include "llard/objective.hpp"

namespace llard {

enum class EvalSplit { Val, Test };

struct EvalOptions {
  std::vector<int> cutoffs = {10, 20};
  // Test-time candidates exclude validation positives by default (keeps
  // tuning data out of the pool); flip to include them.
  bool include_val_in_candidates = false;
};

struct MetricReport {
  std::vector<int> cutoffs;
  std::map<int, double> recall;  // means over evaluated users
  std::map<int, double> ndcg;
  std::vector<std::uint32_t> users;               // evaluated users
  std::map<int, std::vector<double>> user_recall;  // aligned with `users`
  std::map<int, std::vector<double>> user_ndcg;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Candidate items for one user, sorted by score descending with ascending
/// item index breaking ties. Excluded: the user's train positives, plus val
/// positives when `exclude_val`.
inline std::vector<std::uint32_t> rank_candidates(
    const Mat& h, std::uint32_t user, const Dataset& ds,
    const std::vector<std::vector<std::uint32_t>>& user_val_items,
    bool exclude_val) {
  const auto scores = score_all(h, user, ds.num_users(), ds.num_items());
  const auto& train_pos = ds.user_train_items[user];
  const auto& val_pos = user_val_items[user];
  std::vector<std::uint32_t> candidates;
  candidates.reserve(ds.num_items());
  for (std::uint32_t i = 0; i < ds.num_items(); ++i) {
    if (std::binary_search(train_pos.begin(), train_pos.end(), i)) continue;
    if (exclude_val && std::binary_search(val_pos.begin(), val_pos.end(), i))
      continue;
    candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (scores[a] != scores[b]) return scores[a] > scores[b];
                     return a < b;
                   });
  return candidates;
}

/// Recall@N and binary-gain NDCG@N (discount 1/log2(rank+1), ideal DCG over
/// min(N, |test|) ranks).
inline std::pair<double, double> topn_metrics(
    const std::vector<std::uint32_t>& ranked,
    const std::set<std::uint32_t>& test_items, int n) {
  if (n < 1) throw UsageError("topn_metrics: N must be >= 1");
  if (test_items.empty())
    throw UsageError("topn_metrics: user has no test items");
  const std::size_t top = std::min<std::size_t>(n, ranked.size());
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t r = 0; r < top; ++r) {
    if (test_items.count(ranked[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min<std::size_t>(n, test_items.size());
  for (std::size_t r = 0; r < ideal; ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  const double recall =
      static_cast<double>(hits) / static_cast<double>(test_items.size());
  return {recall, idcg > 0.0 ? dcg / idcg : 0.0};
}

namespace detail {

inline std::vector<std::vector<std::uint32_t>> split_items_per_user(
    const Dataset& ds, const std::vector<IndexedInteraction>& rows) {
  std::vector<std::vector<std::uint32_t>> out(ds.num_users());
  for (const auto& r : rows) out[r.user].push_back(r.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

}  // namespace detail

/// Evaluate representations against a split; users without items in the
/// split are excluded from the averages.
inline MetricReport evaluate_representations(
    const Mat& h, const Dataset& ds, EvalSplit split,
    const EvalOptions& options = {}) {
  const auto& rows = split == EvalSplit::Val ? ds.val : ds.test;
  const auto target_items = detail::split_items_per_user(ds, rows);
  const auto val_items = detail::split_items_per_user(ds, ds.val);
  // Validation candidates must keep val positives rankable; test candidates
  // exclude them unless configured otherwise.
  const bool exclude_val =
      split == EvalSplit::Test && !options.include_val_in_candidates;

  MetricReport report;
  report.cutoffs = options.cutoffs;
  for (const int n : options.cutoffs) {
    report.user_recall[n] = {};
    report.user_ndcg[n] = {};
  }
  for (std::uint32_t u = 0; u < ds.num_users(); ++u) {
    if (target_items[u].empty()) continue;
    const auto ranked = rank_candidates(h, u, ds, val_items, exclude_val);
    const std::set<std::uint32_t> targets(target_items[u].begin(),
                                          target_items[u].end());
    report.users.push_back(u);
    for (const int n : options.cutoffs) {
      const auto [recall, ndcg] = topn_metrics(ranked, targets, n);
      report.user_recall[n].push_back(recall);
      report.user_ndcg[n].push_back(ndcg);
    }
  }
  for (const int n : options.cutoffs) {
    const auto& ur = report.user_recall[n];
    const auto& un = report.user_ndcg[n];
    const double count = ur.empty() ? 1.0 : static_cast<double>(ur.size());
    report.recall[n] = std::accumulate(ur.begin(), ur.end(), 0.0) / count;
    report.ndcg[n] = std::accumulate(un.begin(), un.end(), 0.0) / count;
  }
  return report;
}

/// Convenience: eval-mode forward then evaluate.
inline MetricReport evaluate(const ModelState& state,
                             const InteractionGraph& train_graph,
                             const Dataset& ds, EvalSplit split,
                             const StepConfig& cfg,
                             const EvalOptions& options = {}) {
  const Mat h = eval_representations(state, train_graph, cfg);
  return evaluate_representations(h, ds, split, options);
}

// ---------------------------------------------------------------------------
// Cold-start grouping: evaluated users sorted by train-interaction count and
// split into five equal-size quantile groups (group 0 = sparsest).
// ---------------------------------------------------------------------------

struct ColdStartReport {
  std::vector<MetricReport> groups;            // five reports
  std::vector<std::size_t> group_median_count;  // median train count per group
};

inline ColdStartReport coldstart_report(const Mat& h, const Dataset& ds,
                                        const EvalOptions& options = {}) {
  const auto base = evaluate_representations(h, ds, EvalSplit::Test, options);
  if (base.users.size() < 5)
    throw DataError("coldstart_report: need at least 5 evaluated users");

  // Sort evaluated users by (train count, index).
  std::vector<std::size_t> order(base.users.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ca = ds.user_train_items[base.users[a]].size();
    const auto cb = ds.user_train_items[base.users[b]].size();
    if (ca != cb) return ca < cb;
    return base.users[a] < base.users[b];
  });

  ColdStartReport report;
  const std::size_t n = order.size();
  for (std::size_t g = 0; g < 5; ++g) {
    const std::size_t lo = g * n / 5;
    const std::size_t hi = (g + 1) * n / 5;
    MetricReport group;
    group.cutoffs = base.cutoffs;
    std::vector<std::size_t> counts;
    for (std::size_t k = lo; k < hi; ++k) {
      const std::size_t idx = order[k];
      group.users.push_back(base.users[idx]);
      counts.push_back(ds.user_train_items[base.users[idx]].size());
      for (const int cut : base.cutoffs) {
        group.user_recall[cut].push_back(base.user_recall.at(cut)[idx]);
        group.user_ndcg[cut].push_back(base.user_ndcg.at(cut)[idx]);
      }
    }
    for (const int cut : base.cutoffs) {
      const auto& ur = group.user_recall[cut];
      const double count = ur.empty() ? 1.0 : static_cast<double>(ur.size());
      group.recall[cut] =
          std::accumulate(ur.begin(), ur.end(), 0.0) / count;
      const auto& un = group.user_ndcg[cut];
      group.ndcg[cut] = std::accumulate(un.begin(), un.end(), 0.0) / count;
    }
    report.group_median_count.push_back(
        counts.empty() ? 0 : counts[counts.size() / 2]);
    report.groups.push_back(std::move(group));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report files: tab-separated (metric, N, value) tables.
// ---------------------------------------------------------------------------

inline void write_metric_report(const MetricReport& report,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  char buf[64];
  for (const int n : report.cutoffs) {
    std::snprintf(buf, sizeof(buf), "%.10g", report.recall.at(n));
    out << "recall\t" << n << '\t' << buf << '\n';
    std::snprintf(buf, sizeof(buf), "%.10g", report.ndcg.at(n));
    out << "ndcg\t" << n << '\t' << buf << '\n';
  }
  out << "users\t-\t" << report.users.size() << '\n';
  if (!report.config_hash.empty())
    out << "config_hash\t-\t" << report.config_hash << '\n';
}

inline void write_coldstart_report(const ColdStartReport& report,
                                   const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  char buf[64];
  for (std::size_t g = 0; g < report.groups.size(); ++g) {
    const auto& group = report.groups[g];
    for (const int n : group.cutoffs) {
      std::snprintf(buf, sizeof(buf), "%.10g", group.recall.at(n));
      out << g << "\trecall\t" << n << '\t' << buf << '\n';
      std::snprintf(buf, sizeof(buf), "%.10g", group.ndcg.at(n));
      out << g << "\tndcg\t" << n << '\t' << buf << '\n';
    }
    out << g << "\tusers\t-\t" << group.users.size() << '\n';
    out << g << "\tmedian_train_count\t-\t" << report.group_median_count[g]
        << '\n';
  }
}

}  // namespace llard
