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
#include <filesystem>

#include "llard/model.hpp"
#include "llard/objective.hpp"
#include "support/oracles.hpp"

using namespace llard;

namespace {

InteractionGraph unit_graph(std::size_t nu, std::size_t ni,
                            const std::vector<GraphEdge>& edges) {
  return InteractionGraph(nu, ni, edges);
}

MaskGenerator zero_mask(std::size_t d) {
  MaskGenerator m;
  m.d = d;
  m.hidden = 8;
  m.w1 = Mat(8, 2 * d);
  m.b1.assign(8, 0.0);
  m.w2.assign(8, 0.0);
  return m;
}

}  // namespace

TEST_CASE("edge_logits: zero network yields zero logits") {
  Rng rng(1);
  const Mat e = Mat::randn(4, 3, 1.0, rng);
  const auto mask = zero_mask(3);
  const std::vector<GraphEdge> edges = {{0, 2}, {1, 3}};
  const auto logits = edge_logits(mask, e, edges);
  CHECK(logits == std::vector<double>{0.0, 0.0});
}

TEST_CASE("edge_logits align with the edge list under permutation") {
  Rng rng(2);
  const Mat e = Mat::randn(6, 4, 1.0, rng);
  auto mask = MaskGenerator::init(4, rng);
  const std::vector<GraphEdge> edges = {{0, 3}, {1, 4}, {2, 5}};
  const std::vector<GraphEdge> permuted = {{2, 5}, {0, 3}, {1, 4}};
  const auto a = edge_logits(mask, e, edges);
  const auto b = edge_logits(mask, e, permuted);
  CHECK(a[0] == b[1]);
  CHECK(a[1] == b[2]);
  CHECK(a[2] == b[0]);
}

TEST_CASE("sample_mask: pinned delta gives the closed form") {
  // δ = 0.5 makes the logistic noise zero, so q = σ(λ/τ).
  const std::vector<double> logits = {0.3, -1.2, 0.0};
  const auto q = sample_mask(logits, 0.5, {}, /*train_mode=*/false);
  for (std::size_t e = 0; e < logits.size(); ++e)
    CHECK(q[e] == Catch::Approx(sigmoid(logits[e] / 0.5)).epsilon(1e-12));
}

TEST_CASE("sample_mask statistics: mean at tau=1 and binarization at tau=0.01") {
  Rng rng(7);
  const std::size_t draws = 100000;
  const std::vector<double> zero_logits(draws, 0.0);

  const auto noise1 = sample_logistic_noise(draws, rng);
  const auto q1 = sample_mask(zero_logits, 1.0, noise1, true);
  double mean = 0.0;
  for (const double v : q1) mean += v;
  mean /= draws;
  CHECK(mean == Catch::Approx(0.5).margin(0.01));

  // Binarization as tau -> 0: the exact interior mass at lambda = 0 is
  // P(q in (0.01, 0.99)) = tanh(tau * ln(99) / 2). At tau = 0.01 that is
  // ~2.30e-2; at the near-step tau = 1e-4 it collapses to ~2.3e-4.
  const auto noise2 = sample_logistic_noise(draws, rng);
  const auto q2 = sample_mask(zero_logits, 0.01, noise2, true);
  std::size_t interior = 0;
  for (const double v : q2) interior += (v > 0.01 && v < 0.99);
  const double expected = std::tanh(0.01 * std::log(99.0) / 2.0);
  CHECK(static_cast<double>(interior) / draws ==
        Catch::Approx(expected).margin(0.002));

  const auto noise3 = sample_logistic_noise(draws, rng);
  const auto q3 = sample_mask(zero_logits, 1e-4, noise3, true);
  std::size_t interior3 = 0;
  for (const double v : q3) interior3 += (v > 0.01 && v < 0.99);
  CHECK(static_cast<double>(interior3) / draws < 0.001);
}

TEST_CASE("mask is strictly increasing in the logit for fixed noise") {
  const std::vector<double> logits = {-2.0, -0.5, 0.0, 0.5, 2.0};
  const std::vector<double> noise(logits.size(), 0.37);
  const auto q = sample_mask(logits, 0.7, noise, true);
  for (std::size_t e = 1; e < q.size(); ++e) CHECK(q[e] > q[e - 1]);
}

TEST_CASE("apply_mask: identity at q=1, vanishing rows at q->0") {
  const auto g = unit_graph(1, 2, {{0, 1}, {0, 2}});
  const auto same = apply_mask(g, {1.0, 1.0});
  CHECK(same.normalized_entry(0, 1) == g.normalized_entry(0, 1));

  const auto gone = apply_mask(g, {0.0, 0.0});
  CHECK(gone.normalized_entry(0, 1) == 0.0);

  // Hand-normalized weighted adjacency for q = (1, 0.25).
  const auto mixed = apply_mask(g, {1.0, 0.25});
  CHECK(mixed.normalized_entry(0, 1) == Catch::Approx(1.0 / std::sqrt(1.25)));
  CHECK(mixed.normalized_entry(0, 2) ==
        Catch::Approx(0.25 / std::sqrt(1.25 * 0.25)));

  CHECK(hard_edges({0.9, 0.5, 0.49}) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("forward_lightgcn: zero layers returns the table") {
  Rng rng(3);
  const auto g = unit_graph(2, 2, {{0, 2}, {1, 3}});
  const Mat e = Mat::randn(4, 5, 1.0, rng);
  const Mat h = forward_lightgcn(g, e, 0);
  CHECK(h.data() == e.data());
}

TEST_CASE("forward_lightgcn: one-layer hand example") {
  // 1 user with e_u = [1,0], 1 item with e_i = [0,1], unit edge, L = 1.
  const auto g = unit_graph(1, 1, {{0, 1}});
  Mat e(2, 2);
  e(0, 0) = 1.0;
  e(1, 1) = 1.0;
  const Mat h = forward_lightgcn(g, e, 1);
  CHECK(h(0, 0) == Catch::Approx(0.5));
  CHECK(h(0, 1) == Catch::Approx(0.5));
  CHECK(h(1, 0) == Catch::Approx(0.5));
  CHECK(h(1, 1) == Catch::Approx(0.5));
}

TEST_CASE("forward_lightgcn: disconnected node keeps e/(L+1)") {
  const auto g = unit_graph(2, 2, {{0, 2}});  // user 1 and item 3 isolated
  Rng rng(4);
  const Mat e = Mat::randn(4, 3, 1.0, rng);
  const int L = 3;
  const Mat h = forward_lightgcn(g, e, L);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(h(1, k) == Catch::Approx(e(1, k) / (L + 1)));
}

TEST_CASE("forward_lightgcn is linear in the table") {
  Rng rng(5);
  const auto g = unit_graph(3, 4, {{0, 3}, {0, 4}, {1, 5}, {2, 6}, {1, 3}});
  const Mat e = Mat::randn(7, 4, 1.0, rng);
  Mat e2 = e;
  for (auto& v : e2.data()) v *= 2.5;
  const Mat h = forward_lightgcn(g, e, 2);
  const Mat h2 = forward_lightgcn(g, e2, 2);
  for (std::size_t k = 0; k < h.data().size(); ++k)
    CHECK(h2.data()[k] == Catch::Approx(2.5 * h.data()[k]).margin(1e-12));
}

TEST_CASE("layer mean equals the dense matrix-power oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<GraphEdge> edges;
    std::vector<double> weights;
    const std::size_t nu = 6, ni = 8;
    for (int k = 0; k < 25; ++k) {
      edges.push_back({static_cast<std::uint32_t>(rng.index(nu)),
                       static_cast<std::uint32_t>(nu + rng.index(ni))});
      weights.push_back(0.1 + 0.9 * rng.real01());
    }
    InteractionGraph g(nu, ni, edges, weights);
    const Mat e = Mat::randn(nu + ni, 5, 1.0, rng);
    const int L = 3;
    const Mat h = forward_lightgcn(g, e, L);

    // Oracle: (1/(L+1)) Σ_l A^l E with dense powers.
    const Mat a = g.dense();
    Mat acc = e;
    Mat x = e;
    for (int l = 1; l <= L; ++l) {
      x = oracle::matmul(a, x);
      for (std::size_t k = 0; k < acc.data().size(); ++k)
        acc.data()[k] += x.data()[k];
    }
    for (auto& v : acc.data()) v /= (L + 1);
    for (std::size_t k = 0; k < h.data().size(); ++k)
      CHECK(h.data()[k] == Catch::Approx(acc.data()[k]).margin(1e-12));
  }
}

TEST_CASE("forward_gmf: products and the naive oracle") {
  Mat e(2, 2);
  e(0, 0) = 1.0;
  e(0, 1) = 1.0;
  e(1, 0) = 1.0;
  e(1, 1) = 1.0;
  CHECK(forward_gmf(e, 0, 1) == Catch::Approx(2.0));

  Mat orth(2, 2);
  orth(0, 0) = 1.0;
  orth(1, 1) = 1.0;
  CHECK(forward_gmf(orth, 0, 1) == 0.0);

  Rng rng(8);
  const Mat r = Mat::randn(2, 8, 1.0, rng);
  double naive = 0.0;
  for (std::size_t k = 0; k < 8; ++k) naive += r(0, k) * r(1, k);
  CHECK(forward_gmf(r, 0, 1) == Catch::Approx(naive).margin(1e-12));
}

TEST_CASE("score_all matches pairwise scoring and scales linearly") {
  Rng rng(9);
  const std::size_t nu = 4, ni = 10;
  Mat h = Mat::randn(nu + ni, 6, 1.0, rng);
  const auto scores = score_all(h, 2, nu, ni);
  REQUIRE(scores.size() == ni);
  for (int k = 0; k < 10; ++k) {
    const auto i = rng.index(ni);
    CHECK(scores[i] ==
          Catch::Approx(dot(h.row_span(2), h.row_span(nu + i))).margin(1e-12));
  }

  // All-zero item block: zero scores.
  Mat hz = h;
  for (std::size_t i = 0; i < ni; ++i)
    for (std::size_t k = 0; k < 6; ++k) hz(nu + i, k) = 0.0;
  for (const double s : score_all(hz, 2, nu, ni)) CHECK(s == 0.0);

  // Doubling h_u doubles the scores.
  Mat hd = h;
  for (std::size_t k = 0; k < 6; ++k) hd(2, k) *= 2.0;
  const auto doubled = score_all(hd, 2, nu, ni);
  for (std::size_t i = 0; i < ni; ++i)
    CHECK(doubled[i] == Catch::Approx(2.0 * scores[i]).margin(1e-12));
}

TEST_CASE("eval-mode representations are deterministic") {
  auto state = ModelState::init(Backbone::LightGCN, 3, 4, 8, 2, 4, 42);
  const auto g = unit_graph(3, 4, {{0, 3}, {1, 4}, {2, 5}, {0, 6}});
  StepConfig cfg;
  const Mat h1 = eval_representations(state, g, cfg);
  const Mat h2 = eval_representations(state, g, cfg);
  CHECK(h1.data() == h2.data());
}

TEST_CASE("checkpoint round-trip reproduces forward passes bit-for-bit") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "llard_ckpt";
  fs::create_directories(dir);
  const auto path = (dir / "model.ckpt").string();

  auto state = ModelState::init(Backbone::LightGCN, 5, 6, 8, 2, 4, 7);
  const auto g = unit_graph(5, 6, {{0, 5}, {1, 6}, {2, 7}, {3, 8}, {4, 9},
                                   {0, 10}, {1, 5}});
  std::vector<double> m(total_params(state), 0.125);
  std::vector<double> v(total_params(state), 0.25);
  CheckpointMeta meta{3, 0.5 + 1e-13, "abc"};
  save_checkpoint(path, state, m, v, meta);

  // Saving quantized the live state; its forward is now the reference.
  StepConfig cfg;
  const Mat before = eval_representations(state, g, cfg);

  std::vector<double> m2, v2;
  CheckpointMeta meta2;
  auto loaded = load_checkpoint(path, &m2, &v2, &meta2);
  CHECK(loaded.backbone == state.backbone);
  CHECK(meta2.epoch == 3);
  CHECK(m2 == m);
  CHECK(v2 == v);
  const Mat after = eval_representations(loaded, g, cfg);
  REQUIRE(after.data().size() == before.data().size());
  for (std::size_t k = 0; k < after.data().size(); ++k)
    CHECK(after.data()[k] == before.data()[k]);  // bit-for-bit

  // Re-saving the loaded state produces identical bytes.
  const auto path2 = (dir / "model2.ckpt").string();
  save_checkpoint(path2, loaded, m2, v2, meta2);
  CHECK(hash_file(path).hex() == hash_file(path2).hex());
}
