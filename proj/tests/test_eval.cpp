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

#include <catch2/catch_amalgamated.hpp>

#include "llard/eval.hpp"
#include "support/synthetic.hpp"

using namespace llard;

namespace {

// Fully naive evaluator: explicit loops, no shared code with eval.hpp's
// ranking path beyond the score definition.
struct NaiveMetrics {
  double recall, ndcg;
};

NaiveMetrics naive_user_metrics(const Mat& h, std::uint32_t user,
                                const Dataset& ds,
                                const std::set<std::uint32_t>& test_items,
                                const std::set<std::uint32_t>& excluded,
                                int n) {
  std::vector<std::pair<double, std::uint32_t>> scored;
  for (std::uint32_t i = 0; i < ds.num_items(); ++i) {
    if (excluded.count(i)) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < h.cols(); ++k)
      s += h(user, k) * h(ds.num_users() + i, k);
    scored.push_back({s, i});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::size_t hits = 0;
  double dcg = 0.0;
  for (std::size_t r = 0; r < scored.size() && r < static_cast<std::size_t>(n);
       ++r) {
    if (test_items.count(scored[r].second)) {
      ++hits;
      dcg += 1.0 / std::log2(r + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0;
       r < std::min<std::size_t>(n, test_items.size()); ++r)
    idcg += 1.0 / std::log2(r + 2.0);
  return {static_cast<double>(hits) / test_items.size(), dcg / idcg};
}

}  // namespace

TEST_CASE("rank_candidates excludes positives and breaks ties by index") {
  // 3 items, user trains on item 1: candidates are {0, 2}.
  Dataset ds;
  ds.user_ids = {"u0"};
  ds.item_ids = {"i0", "i1", "i2"};
  ds.user_index["u0"] = 0;
  for (std::uint32_t i = 0; i < 3; ++i) ds.item_index[ds.item_ids[i]] = i;
  ds.train = {{0, 1, std::nullopt}};
  ds.finalize();

  Mat h(4, 2);  // all-zero: every score ties at 0
  const std::vector<std::vector<std::uint32_t>> val_items(1);
  const auto ranked = rank_candidates(h, 0, ds, val_items, false);
  CHECK(ranked == std::vector<std::uint32_t>{0, 2});  // ascending on ties
}

TEST_CASE("topn_metrics closed forms") {
  const std::vector<std::uint32_t> ranked = {7, 3, 9, 1};
  // test = {A=3, B=5}; top-2 contains only A (rank 2).
  const auto [recall, ndcg] = topn_metrics(ranked, {3, 5}, 2);
  CHECK(recall == Catch::Approx(0.5));

  // Single test item at rank 1: NDCG 1.
  CHECK(topn_metrics(ranked, {7}, 2).second == Catch::Approx(1.0));

  // Single test item at rank 2, N = 2: NDCG = 1/log2(3).
  CHECK(topn_metrics(ranked, {3}, 2).second ==
        Catch::Approx(1.0 / std::log2(3.0)).margin(1e-12));
}

TEST_CASE("perfect model scores all metrics 1.0") {
  auto inst = synthetic::make_clustered({.users = 5,
                                         .items = 12,
                                         .clusters = 1,
                                         .min_per_user = 8,
                                         .max_per_user = 10,
                                         .seed = 4});
  auto& ds = inst.dataset;
  // One test item per user; craft one-hot embeddings putting it first.
  std::vector<IndexedInteraction> single;
  std::set<std::uint32_t> seen;
  for (const auto& r : ds.test)
    if (seen.insert(r.user).second) single.push_back(r);
  ds.test = single;
  ds.finalize();
  REQUIRE(ds.test.size() == 5);

  Mat h(ds.num_users() + ds.num_items(), ds.num_items());
  for (std::uint32_t i = 0; i < ds.num_items(); ++i)
    h(ds.num_users() + i, i) = 1.0;
  for (const auto& r : ds.test) h(r.user, r.item) = 1.0;

  const auto report = evaluate_representations(h, ds, EvalSplit::Test);
  CHECK(report.recall.at(10) == Catch::Approx(1.0));
  CHECK(report.recall.at(20) == Catch::Approx(1.0));
  CHECK(report.ndcg.at(10) == Catch::Approx(1.0));
}

TEST_CASE("random scores land at the analytic expectation") {
  auto inst = synthetic::make_clustered({.users = 300,
                                         .items = 50,
                                         .clusters = 1,
                                         .min_per_user = 8,
                                         .max_per_user = 12,
                                         .seed = 9});
  const auto& ds = inst.dataset;
  Rng rng(31);
  const Mat h = Mat::randn(ds.num_users() + ds.num_items(), 8, 1.0, rng);
  const auto report = evaluate_representations(h, ds, EvalSplit::Test);

  // Per user: E[hits in top-20] = 20·t/c, so E[recall@20] = 20/c.
  const auto val_items = detail::split_items_per_user(ds, ds.val);
  double expectation = 0.0;
  for (const auto u : report.users) {
    const std::size_t c = ds.num_items() - ds.user_train_items[u].size() -
                          val_items[u].size();
    expectation += std::min(1.0, 20.0 / static_cast<double>(c));
  }
  expectation /= static_cast<double>(report.users.size());

  const auto& per_user = report.user_recall.at(20);
  double var = 0.0;
  for (const double r : per_user) {
    const double d = r - report.recall.at(20);
    var += d * d;
  }
  const double se =
      std::sqrt(var / per_user.size() / static_cast<double>(per_user.size()));
  CHECK(std::abs(report.recall.at(20) - expectation) <= 3.0 * se + 1e-9);
}

TEST_CASE("evaluate matches the fully naive evaluator") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = synthetic::make_clustered({.users = 30,
                                           .items = 40,
                                           .clusters = 3,
                                           .min_per_user = 6,
                                           .max_per_user = 10,
                                           .seed = seed + 40});
    const auto& ds = inst.dataset;
    Rng rng(seed);
    const Mat h = Mat::randn(ds.num_users() + ds.num_items(), 6, 1.0, rng);
    const auto report = evaluate_representations(h, ds, EvalSplit::Test);

    const auto val_items = detail::split_items_per_user(ds, ds.val);
    const auto test_items = detail::split_items_per_user(ds, ds.test);
    double sum_recall10 = 0.0, sum_ndcg20 = 0.0;
    std::size_t evaluated = 0;
    for (std::uint32_t u = 0; u < ds.num_users(); ++u) {
      if (test_items[u].empty()) continue;
      std::set<std::uint32_t> excluded(ds.user_train_items[u].begin(),
                                       ds.user_train_items[u].end());
      excluded.insert(val_items[u].begin(), val_items[u].end());
      const std::set<std::uint32_t> targets(test_items[u].begin(),
                                            test_items[u].end());
      sum_recall10 += naive_user_metrics(h, u, ds, targets, excluded, 10).recall;
      sum_ndcg20 += naive_user_metrics(h, u, ds, targets, excluded, 20).ndcg;
      ++evaluated;
    }
    CHECK(report.recall.at(10) ==
          Catch::Approx(sum_recall10 / evaluated).margin(1e-12));
    CHECK(report.ndcg.at(20) ==
          Catch::Approx(sum_ndcg20 / evaluated).margin(1e-12));
  }
}

TEST_CASE("recall is non-decreasing in N and no positive leaks into candidates") {
  auto inst = synthetic::make_clustered({.users = 20,
                                         .items = 30,
                                         .clusters = 2,
                                         .min_per_user = 6,
                                         .max_per_user = 9,
                                         .seed = 77});
  const auto& ds = inst.dataset;
  Rng rng(3);
  const Mat h = Mat::randn(ds.num_users() + ds.num_items(), 5, 1.0, rng);
  EvalOptions options;
  options.cutoffs = {5, 10, 20};
  const auto report = evaluate_representations(h, ds, EvalSplit::Test, options);
  CHECK(report.recall.at(5) <= report.recall.at(10) + 1e-12);
  CHECK(report.recall.at(10) <= report.recall.at(20) + 1e-12);

  const auto val_items = detail::split_items_per_user(ds, ds.val);
  for (const auto u : report.users) {
    const auto ranked = rank_candidates(h, u, ds, val_items, true);
    for (const auto i : ranked) {
      CHECK_FALSE(ds.in_train(u, i));
      CHECK_FALSE(std::binary_search(val_items[u].begin(), val_items[u].end(),
                                     i));
    }
  }
}

TEST_CASE("coldstart groups partition evaluated users by frequency") {
  auto inst = synthetic::make_clustered({.users = 100,
                                         .items = 60,
                                         .clusters = 5,
                                         .min_per_user = 5,
                                         .max_per_user = 12,
                                         .seed = 12});
  const auto& ds = inst.dataset;
  Rng rng(5);
  const Mat h = Mat::randn(ds.num_users() + ds.num_items(), 6, 1.0, rng);
  const auto base = evaluate_representations(h, ds, EvalSplit::Test);
  REQUIRE(base.users.size() == 100);  // every user has test items here

  const auto report = coldstart_report(h, ds);
  REQUIRE(report.groups.size() == 5);
  std::set<std::uint32_t> all;
  for (const auto& group : report.groups) {
    CHECK(group.users.size() == 20);  // 100 users -> five groups of 20
    for (const auto u : group.users) CHECK(all.insert(u).second);
  }
  CHECK(all.size() == base.users.size());
  // Group medians are non-decreasing in the group id.
  for (std::size_t g = 1; g < 5; ++g)
    CHECK(report.group_median_count[g] >= report.group_median_count[g - 1]);
}

TEST_CASE("coldstart requires at least five users") {
  auto inst = synthetic::make_clustered({.users = 4,
                                         .items = 12,
                                         .clusters = 1,
                                         .min_per_user = 6,
                                         .max_per_user = 8,
                                         .seed = 2});
  Rng rng(1);
  const Mat h = Mat::randn(inst.dataset.num_users() + inst.dataset.num_items(),
                           4, 1.0, rng);
  CHECK_THROWS_AS(coldstart_report(h, inst.dataset), DataError);
}

TEST_CASE("drop rate arithmetic") {
  // (clean − noisy)/clean; ratio 0 is 0 by definition.
  const double clean = 0.50, noisy = 0.45;
  CHECK((clean - noisy) / clean == Catch::Approx(0.10));
  CHECK((clean - clean) / clean == 0.0);
}
