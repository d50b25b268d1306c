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

#include "llard/objective.hpp"
#include "support/oracles.hpp"

using namespace llard;

TEST_CASE("loss_rec: zero margin gives ln 2 per triple") {
  Mat h(3, 2);  // user 0, items 0 and 1 all equal -> margins are zero
  for (std::size_t r = 0; r < 3; ++r) h(r, 0) = 1.0;
  TripleBatch batch;
  for (int k = 0; k < 7; ++k) batch.triples.push_back({0, 0, 1});
  CHECK(loss_rec(h, batch, 1) == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("loss_rec vanishes as the margin grows") {
  Mat h(3, 1);
  h(0, 0) = 1.0;
  h(1, 0) = 50.0;   // positive item: huge score
  h(2, 0) = -50.0;  // negative item
  TripleBatch batch;
  batch.triples.push_back({0, 0, 1});
  CHECK(loss_rec(h, batch, 1) < 1e-40);
  CHECK(loss_rec(h, batch, 1) > 0.0);
}

TEST_CASE("loss_rec equals the naive oracle on random instances") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t nu = 5, ni = 7;
    const Mat h = Mat::randn(nu + ni, 4, 1.0, rng);
    TripleBatch batch;
    for (int k = 0; k < 20; ++k) {
      batch.triples.push_back({static_cast<std::uint32_t>(rng.index(nu)),
                               static_cast<std::uint32_t>(rng.index(ni)),
                               static_cast<std::uint32_t>(rng.index(ni))});
    }
    CHECK(loss_rec(h, batch, nu) ==
          Catch::Approx(oracle::bpr_loss(h, batch, nu)).margin(1e-10));
  }
}

TEST_CASE("kernel_matrix: closed forms and the naive oracle") {
  Mat same(3, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    same(r, 0) = 0.7;
    same(r, 1) = -0.2;
  }
  const auto ones = kernel_matrix(same, 1.3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(ones(i, j) == Catch::Approx(1.0).margin(1e-15));

  // Two points at distance sqrt(2 σ²): off-diagonal e^{-1}.
  const double sigma = 0.8;
  Mat two(2, 1);
  two(0, 0) = 0.0;
  two(1, 0) = std::sqrt(2.0) * sigma;
  const auto k2 = kernel_matrix(two, sigma);
  CHECK(k2(0, 1) == Catch::Approx(std::exp(-1.0)).margin(1e-12));
  CHECK(k2(0, 0) == 1.0);

  Rng rng(11);
  const Mat pts = Mat::randn(5, 3, 1.0, rng);
  const auto got = kernel_matrix(pts, 0.9);
  const auto want = oracle::gaussian_kernel(pts, 0.9);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(got(i, j) == Catch::Approx(want(i, j)).margin(1e-12));
      CHECK(got(i, j) == got(j, i));
    }
}

TEST_CASE("hsic: zero on constants, n=2 closed form, naive oracle") {
  // Constant embeddings on one side: centering annihilates the signal.
  Rng rng(12);
  Mat constant(6, 3);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 3; ++c) constant(r, c) = 2.0;
  const Mat randm = Mat::randn(6, 3, 1.0, rng);
  const auto kc = kernel_matrix(constant, 1.0);
  const auto km = kernel_matrix(randm, 1.0);
  CHECK(std::abs(hsic(kc, km)) <= 1e-12);
  CHECK(std::abs(hsic(km, kc)) <= 1e-12);

  // n = 2 closed form: HSIC = (1−a)(1−b).
  for (int trial = 0; trial < 10; ++trial) {
    const double a = rng.real01();
    const double b = rng.real01();
    Mat ka(2, 2), mb(2, 2);
    ka(0, 0) = ka(1, 1) = 1.0;
    ka(0, 1) = ka(1, 0) = a;
    mb(0, 0) = mb(1, 1) = 1.0;
    mb(0, 1) = mb(1, 0) = b;
    CHECK(hsic(ka, mb) ==
          Catch::Approx((1.0 - a) * (1.0 - b)).margin(1e-12));
  }

  // Random instances against the explicit-H oracle; non-negativity.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r2(seed + 100);
    const std::size_t n = 2 + r2.index(15);
    const Mat x = Mat::randn(n, 4, 1.0, r2);
    const Mat y = Mat::randn(n, 4, 1.0, r2);
    const auto k = kernel_matrix(x, 1.1);
    const auto m = kernel_matrix(y, 0.7);
    const double got = hsic(k, m);
    CHECK(got == Catch::Approx(oracle::hsic_naive(k, m)).margin(1e-10));
    CHECK(got >= -1e-12);
  }

  Mat tiny(1, 1);
  tiny(0, 0) = 1.0;
  CHECK_THROWS_AS(hsic(tiny, tiny), NumericError);
}

TEST_CASE("infonce: closed forms") {
  // One positive with sim 1, one negative with sim 0, tau'=1, paper-literal
  // form: loss = -(1 - 0) = -1.
  Mat anchors(2, 2), targets(2, 2);
  anchors(0, 0) = 1.0;  // anchor 0 = [1,0]
  anchors(1, 1) = 1.0;  // anchor 1 = [0,1]
  targets(0, 0) = 1.0;  // target 0 = [1,0]: sim(anchor0, target0) = 1
  targets(1, 1) = 1.0;
  const std::vector<std::uint32_t> rows = {0, 1};
  StepDiagnostics diag;
  const double loss = detail::infonce_sum({&anchors, &rows, &targets, &rows},
                                          1.0, false, 0.0, nullptr, nullptr,
                                          &diag);
  // Each anchor: -1 + log(exp(0)) = -1; summed: -2.
  CHECK(loss == Catch::Approx(-2.0).margin(1e-12));

  // All similarities equal: loss = ln(#negatives) per node (0 for one
  // negative).
  Mat same_a(3, 2), same_t(3, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    same_a(r, 0) = 1.0;
    same_t(r, 0) = 1.0;
  }
  const std::vector<std::uint32_t> rows3 = {0, 1, 2};
  const double equal_loss = detail::infonce_sum(
      {&same_a, &rows3, &same_t, &rows3}, 0.5, false, 0.0, nullptr, nullptr,
      nullptr);
  CHECK(equal_loss == Catch::Approx(3.0 * std::log(2.0)).margin(1e-12));
}

TEST_CASE("infonce equals the naive double-loop oracle") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 500);
    const std::size_t n = 2 + rng.index(6);
    const Mat anchors = Mat::randn(n, 5, 1.0, rng);
    const Mat targets = Mat::randn(n, 5, 1.0, rng);
    std::vector<std::uint32_t> rows(n);
    for (std::size_t k = 0; k < n; ++k) rows[k] = static_cast<std::uint32_t>(k);
    for (const bool inclusive : {false, true}) {
      const double got =
          detail::infonce_sum({&anchors, &rows, &targets, &rows}, 0.3,
                              inclusive, 0.0, nullptr, nullptr, nullptr);
      const double want = oracle::infonce(anchors, targets, 0.3, inclusive);
      CHECK(got == Catch::Approx(want).margin(1e-10));
    }
  }
}

TEST_CASE("total_loss: reductions, arithmetic, ablation zeroing") {
  StepConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  const auto reduced = total_loss(1.7, 9.0, 9.0, 9.0, cfg);
  CHECK(reduced.total == Catch::Approx(1.7));

  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  const auto sum = total_loss(1.0, 2.0, 3.0, 4.0, cfg);
  CHECK(sum.total == Catch::Approx(10.0));
  CHECK(sum.total ==
        Catch::Approx(sum.rec + cfg.alpha * (sum.prf + sum.rel) +
                      cfg.beta * sum.comp)
            .margin(1e-10));

  StepConfig no_rk = cfg;
  no_rk.no_rk = true;
  const auto ablated = total_loss(1.0, 2.0, 3.0, 4.0, no_rk);
  CHECK(ablated.rel == 0.0);
  CHECK(ablated.total == Catch::Approx(1.0 + 2.0 + 4.0));
  // Independent of the l_rel input entirely.
  CHECK(total_loss(1.0, 2.0, 77.0, 4.0, no_rk).total == ablated.total);

  StepConfig no_mi_max = cfg;
  no_mi_max.no_mi_max = true;
  const auto nm = total_loss(1.0, 2.0, 3.0, 4.0, no_mi_max);
  CHECK(nm.prf == 0.0);
  CHECK(nm.rel == 0.0);
  CHECK(nm.total == Catch::Approx(5.0));

  StepConfig no_mi_min = cfg;
  no_mi_min.no_mi_min = true;
  CHECK(total_loss(1.0, 2.0, 3.0, 4.0, no_mi_min).comp == 0.0);
}

TEST_CASE("evaluate_step composes the standalone operations") {
  // Forward-only fused step vs manual composition from public ops.
  Rng rng(77);
  const std::size_t nu = 6, ni = 8, d = 4;
  std::vector<GraphEdge> edges;
  for (std::uint32_t u = 0; u < nu; ++u)
    for (int k = 0; k < 3; ++k)
      edges.push_back({u, static_cast<std::uint32_t>(nu + rng.index(ni))});
  InteractionGraph graph(nu, ni, edges);
  InteractionGraph rel = graph;

  auto state = ModelState::init(Backbone::LightGCN, nu, ni, d, 2, 3, 5);
  PreferenceKnowledge kp;
  kp.d = d;
  kp.d_t = 3;
  kp.user_pooled = Mat::randn(nu, 3, 1.0, rng);
  kp.item_pooled = Mat::randn(ni, 3, 1.0, rng);

  TripleBatch batch;
  for (int k = 0; k < 12; ++k)
    batch.triples.push_back({static_cast<std::uint32_t>(rng.index(nu)),
                             static_cast<std::uint32_t>(rng.index(ni)),
                             static_cast<std::uint32_t>(rng.index(ni))});
  Rng noise_rng(3);
  const auto noise = sample_logistic_noise(graph.num_edges(), noise_rng);

  StepConfig cfg;
  cfg.alpha = 0.7;
  cfg.beta = 0.3;
  cfg.kernel.mode = KernelConfig::Mode::Fixed;
  cfg.kernel.sigma_k = 1.2;
  cfg.kernel.sigma_m = 0.9;

  StepInputs in;
  in.graph = &graph;
  in.rel_graph = &rel;
  in.kp = &kp;
  in.batch = &batch;
  in.noise = &noise;
  in.train_mode = true;
  const auto fused = evaluate_step(state, in, cfg);

  // Manual composition.
  const auto logits = edge_logits(state.mask, state.embeddings, graph.edges());
  const auto q = sample_mask(logits, cfg.tau, noise, true);
  const auto masked = apply_mask(graph, q);
  const Mat h_prime = forward_lightgcn(masked, state.embeddings, state.layers);
  const Mat h = forward_lightgcn(graph, state.embeddings, state.layers);
  const Mat h_hat = forward_lightgcn(rel, state.embeddings, state.layers);

  CHECK(fused.rec ==
        Catch::Approx(loss_rec(h_prime, batch, nu)).margin(1e-12));

  std::set<std::uint32_t> us, is;
  for (const auto& t : batch.triples) {
    us.insert(t.user);
    is.insert(nu + t.pos);
    is.insert(nu + t.neg);
  }
  const std::vector<std::uint32_t> users(us.begin(), us.end());
  const std::vector<std::uint32_t> items(is.begin(), is.end());
  const double n_batch = static_cast<double>(users.size() + items.size());

  // L_prf oracle: project pooled vectors, gather anchors, use the naive
  // infonce.
  auto gather = [&](const Mat& src, const std::vector<std::uint32_t>& rows) {
    Mat out(rows.size(), src.cols());
    for (std::size_t k = 0; k < rows.size(); ++k)
      std::copy_n(src.row(rows[k]), src.cols(), out.row(k));
    return out;
  };
  Mat et_u(users.size(), d), et_i(items.size(), d);
  for (std::size_t k = 0; k < users.size(); ++k) {
    const auto row = state.head.apply(kp.user_pooled.row_span(users[k]));
    std::copy(row.begin(), row.end(), et_u.row(k));
  }
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto row = state.head.apply(kp.item_pooled.row_span(items[k] - nu));
    std::copy(row.begin(), row.end(), et_i.row(k));
  }
  const double prf =
      (oracle::infonce(gather(h_prime, users), et_u, cfg.tau_prime, false) +
       oracle::infonce(gather(h_prime, items), et_i, cfg.tau_prime, false)) /
      n_batch;
  CHECK(fused.prf == Catch::Approx(prf).margin(1e-10));

  const double rel_loss =
      (oracle::infonce(gather(h_prime, users), gather(h_hat, users),
                       cfg.tau_prime, false) +
       oracle::infonce(gather(h_prime, items), gather(h_hat, items),
                       cfg.tau_prime, false)) /
      n_batch;
  CHECK(fused.rel == Catch::Approx(rel_loss).margin(1e-10));

  const double comp =
      oracle::hsic_naive(
          oracle::gaussian_kernel(gather(h, users), cfg.kernel.sigma_k),
          oracle::gaussian_kernel(gather(h_prime, users),
                                  cfg.kernel.sigma_m)) +
      oracle::hsic_naive(
          oracle::gaussian_kernel(gather(h, items), cfg.kernel.sigma_k),
          oracle::gaussian_kernel(gather(h_prime, items),
                                  cfg.kernel.sigma_m));
  CHECK(fused.comp == Catch::Approx(comp).margin(1e-10));

  CHECK(fused.total ==
        Catch::Approx(fused.rec + cfg.alpha * (fused.prf + fused.rel) +
                      cfg.beta * fused.comp)
            .margin(1e-10));

  // Identical-view sanity: with G_rel = G and the mask frozen, the rel term
  // contrasts a view against itself and self-similarity is maximal.
  StepConfig frozen = cfg;
  frozen.freeze_mask = true;
  const auto id_losses = evaluate_step(state, in, frozen);
  CHECK(std::isfinite(id_losses.rel));
}
