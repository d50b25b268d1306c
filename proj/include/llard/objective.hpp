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

// The information-bottleneck training objective: ranking loss on the masked
// graph, InfoNCE alignment against preference knowledge and against the
// enriched-graph view, and an HSIC compression term between masked and
// unmasked representations. One combined forward/backward over a triple
// batch, with exact analytic gradients for every trainable parameter
// (embedding table, mask generator, projection head).

#pragma once

#include <optional>
#include <set>

#include "llard/model.hpp"
#include "llard/relation.hpp"

namespace llard {

// ---------------------------------------------------------------------------
// Configuration and result types
// ---------------------------------------------------------------------------

struct KernelConfig {
  enum class Mode { MedianHeuristic, Fixed };
  Mode mode = Mode::MedianHeuristic;
  double sigma_k = 1.0;  // used when Fixed
  double sigma_m = 1.0;
};

struct StepConfig {
  double alpha = 0.1;
  double beta = 0.01;
  double tau = 0.2;        // Gumbel temperature
  double tau_prime = 0.2;  // contrastive temperature
  bool no_pk = false;      // drop the preference-knowledge term
  bool no_rk = false;      // drop the relation-knowledge term
  bool no_mi_min = false;  // drop the compression (HSIC) term
  bool no_mi_max = false;  // drop both knowledge terms
  bool freeze_mask = false;  // q ≡ 1, mask generator untouched
  bool infonce_include_positive = false;  // default: positive excluded
  KernelConfig kernel;

  bool use_pk() const { return !no_pk && !no_mi_max; }
  bool use_rk() const { return !no_rk && !no_mi_max; }
  bool use_comp() const { return !no_mi_min; }
  double effective_alpha() const { return no_mi_max ? 0.0 : alpha; }
  double effective_beta() const { return no_mi_min ? 0.0 : beta; }
};

struct LossBreakdown {
  double rec = 0.0, prf = 0.0, rel = 0.0, comp = 0.0, total = 0.0;
};

/// Eq. 25 combination with ablation zeroing.
inline LossBreakdown total_loss(double rec, double prf, double rel,
                                double comp, const StepConfig& cfg) {
  LossBreakdown out;
  out.rec = rec;
  out.prf = cfg.use_pk() ? prf : 0.0;
  out.rel = cfg.use_rk() ? rel : 0.0;
  out.comp = cfg.use_comp() ? comp : 0.0;
  out.total = out.rec + cfg.effective_alpha() * (out.prf + out.rel) +
              cfg.effective_beta() * out.comp;
  if (!std::isfinite(out.total))
    throw NumericError("total_loss: non-finite loss");
  return out;
}

struct StepDiagnostics {
  std::size_t zero_norm_cosines = 0;
  std::size_t skipped_infonce_nodes = 0;  // nodes with no negatives
  double sigma_k = 0.0, sigma_m = 0.0;    // bandwidths actually used
};

struct Grads {
  Mat embeddings;
  Mat mask_w1;
  std::vector<double> mask_b1, mask_w2;
  double mask_b2 = 0.0;
  Mat head_w, head_w1, head_w2;
  std::vector<double> head_b1, head_b;

  static Grads zeros_like(const ModelState& s) {
    Grads g;
    g.embeddings = Mat(s.embeddings.rows(), s.embeddings.cols());
    g.mask_w1 = Mat(s.mask.w1.rows(), s.mask.w1.cols());
    g.mask_b1.assign(s.mask.b1.size(), 0.0);
    g.mask_w2.assign(s.mask.w2.size(), 0.0);
    if (s.head.has_hidden) {
      g.head_w1 = Mat(s.head.w1.rows(), s.head.w1.cols());
      g.head_b1.assign(s.head.b1.size(), 0.0);
      g.head_w2 = Mat(s.head.w2.rows(), s.head.w2.cols());
    } else {
      g.head_w = Mat(s.head.w.rows(), s.head.w.cols());
    }
    g.head_b.assign(s.head.b.size(), 0.0);
    return g;
  }

  /// Blocks in the same order as param_blocks(ModelState).
  std::vector<ParamBlock> blocks(const ModelState& s) {
    std::vector<ParamBlock> out;
    out.push_back({"embeddings", embeddings.data().data(),
                   embeddings.data().size()});
    out.push_back({"mask.w1", mask_w1.data().data(), mask_w1.data().size()});
    out.push_back({"mask.b1", mask_b1.data(), mask_b1.size()});
    out.push_back({"mask.w2", mask_w2.data(), mask_w2.size()});
    out.push_back({"mask.b2", &mask_b2, 1});
    if (s.head.has_hidden) {
      out.push_back({"head.w1", head_w1.data().data(),
                     head_w1.data().size()});
      out.push_back({"head.b1", head_b1.data(), head_b1.size()});
      out.push_back({"head.w2", head_w2.data().data(),
                     head_w2.data().size()});
    } else {
      out.push_back({"head.w", head_w.data().data(), head_w.data().size()});
    }
    out.push_back({"head.b", head_b.data(), head_b.size()});
    return out;
  }

  double group_norm(std::string_view prefix, const ModelState& s) {
    double sq = 0.0;
    for (const auto& b : blocks(s)) {
      if (!starts_with(b.name, prefix)) continue;
      for (std::size_t k = 0; k < b.size; ++k) sq += b.data[k] * b.data[k];
    }
    return std::sqrt(sq);
  }
};

// ---------------------------------------------------------------------------
// Standalone operations (also used as the step's building blocks)
// ---------------------------------------------------------------------------

/// Mean BPR loss over triples: (1/m) Σ −log σ(y'_ui − y'_uj) with
/// y'_ui = h'_u · h'_i.
inline double loss_rec(const Mat& h_prime, const TripleBatch& batch,
                       std::size_t num_users) {
  if (batch.size() == 0) return 0.0;
  double sum = 0.0;
  for (const auto& t : batch.triples) {
    const auto hu = h_prime.row_span(t.user);
    const double margin = dot(hu, h_prime.row_span(num_users + t.pos)) -
                          dot(hu, h_prime.row_span(num_users + t.neg));
    sum += neg_log_sigmoid(margin);
  }
  return sum / static_cast<double>(batch.size());
}

/// Gaussian kernel matrix: symmetric, unit diagonal, entries in (0,1].
inline Mat kernel_matrix(const Mat& points, double bandwidth) {
  if (points.rows() < 2)
    throw NumericError("kernel_matrix: need at least two points");
  if (!(bandwidth > 0.0))
    throw NumericError("kernel_matrix: bandwidth must be positive");
  const std::size_t n = points.rows();
  Mat k(n, n);
  const double denom = 2.0 * bandwidth * bandwidth;
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v =
          std::exp(-sq_distance(points.row_span(i), points.row_span(j)) /
                   denom);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

/// Double centering: HKH with H = I − (1/n)11ᵀ.
inline Mat center_kernel(const Mat& k) {
  const std::size_t n = k.rows();
  std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_mean[i] += k(i, j);
      col_mean[j] += k(i, j);
      total += k(i, j);
    }
  for (auto& v : row_mean) v /= static_cast<double>(n);
  for (auto& v : col_mean) v /= static_cast<double>(n);
  total /= static_cast<double>(n * n);
  Mat out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out(i, j) = k(i, j) - row_mean[i] - col_mean[j] + total;
  return out;
}

/// HSIC estimate trace(HKH · HMH)/(n−1)²; the compression loss.
inline double hsic(const Mat& k, const Mat& m) {
  if (k.rows() != k.cols() || m.rows() != m.cols() || k.rows() != m.rows())
    throw NumericError("hsic: kernel matrices must be square and same size");
  const std::size_t n = k.rows();
  if (n < 2) throw NumericError("hsic: need n >= 2");
  const Mat kc = center_kernel(k);
  const Mat mc = center_kernel(m);
  double tr = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) tr += kc(i, j) * mc(j, i);
  return tr / (static_cast<double>(n - 1) * static_cast<double>(n - 1));
}

/// Median pairwise Euclidean distance over the given rows (upper median).
inline double median_pairwise_distance(const Mat& points,
                                       const std::vector<std::uint32_t>& rows) {
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      dists.push_back(std::sqrt(
          sq_distance(points.row_span(rows[i]), points.row_span(rows[j]))));
  if (dists.empty()) return 0.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                   dists.end());
  return dists[dists.size() / 2];
}

// ---------------------------------------------------------------------------
// Internal fused blocks with gradients
// ---------------------------------------------------------------------------

namespace detail {

struct CosineGrad {
  double value = 0.0;
  bool zero_norm = false;
};

inline CosineGrad cosine_value(std::span<const double> a,
                               std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {dot(a, b) / (na * nb), false};
}

// d cos/d a = b/(|a||b|) − cos·a/|a|²  (zero when either norm is zero).
inline void cosine_backward(std::span<const double> a,
                            std::span<const double> b, double cos_val,
                            double upstream, std::span<double> da,
                            std::span<double> db) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return;
  const double inv = 1.0 / (na * nb);
  for (std::size_t k = 0; k < a.size(); ++k) {
    da[k] += upstream * (b[k] * inv - cos_val * a[k] / (na * na));
    db[k] += upstream * (a[k] * inv - cos_val * b[k] / (nb * nb));
  }
}

/// Paper-literal InfoNCE over one node type: anchors[k] is scored against
/// targets[k] (positive) and all other targets (negatives; positive excluded
/// from the denominator unless include_positive). Returns the SUM over
/// anchors; gradient contributions are scaled by grad_weight.
struct InfoNceViews {
  const Mat* anchor_mat;
  const std::vector<std::uint32_t>* anchor_rows;
  const Mat* target_mat;
  const std::vector<std::uint32_t>* target_rows;
};

inline double infonce_sum(const InfoNceViews& v, double tau_prime,
                          bool include_positive, double grad_weight,
                          Mat* d_anchor, Mat* d_target,
                          StepDiagnostics* diag) {
  const std::size_t n = v.anchor_rows->size();
  if (n == 0) return 0.0;
  if (n == 1 && !include_positive) {
    if (diag) ++diag->skipped_infonce_nodes;
    return 0.0;
  }
  // Similarity logits s[a][b] = cos(anchor_a, target_b)/τ'.
  Mat s(n, n);
  Mat cos_vals(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const auto cg = cosine_value(
          v.anchor_mat->row_span((*v.anchor_rows)[a]),
          v.target_mat->row_span((*v.target_rows)[b]));
      if (cg.zero_norm && diag) ++diag->zero_norm_cosines;
      cos_vals(a, b) = cg.value;
      s(a, b) = cg.value / tau_prime;
    }
  }
  double loss = 0.0;
  Mat ds(n, n);  // upstream gradient into s
  for (std::size_t a = 0; a < n; ++a) {
    // log-sum-exp over the denominator set.
    double max_s = -1e300;
    for (std::size_t b = 0; b < n; ++b) {
      if (!include_positive && b == a) continue;
      max_s = std::max(max_s, s(a, b));
    }
    double z = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (!include_positive && b == a) continue;
      z += std::exp(s(a, b) - max_s);
    }
    loss += -s(a, a) + max_s + std::log(z);
    ds(a, a) += -1.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (!include_positive && b == a) continue;
      ds(a, b) += std::exp(s(a, b) - max_s) / z;
    }
  }
  if (d_anchor && d_target) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        if (ds(a, b) == 0.0) continue;
        const double upstream = grad_weight * ds(a, b) / tau_prime;
        cosine_backward(v.anchor_mat->row_span((*v.anchor_rows)[a]),
                        v.target_mat->row_span((*v.target_rows)[b]),
                        cos_vals(a, b), upstream,
                        d_anchor->row_span((*v.anchor_rows)[a]),
                        d_target->row_span((*v.target_rows)[b]));
      }
    }
  }
  return loss;
}

/// One HSIC term between the rows of X (kernel K, bandwidth sigma_x) and the
/// rows of Y (kernel M, bandwidth sigma_y); gradients scaled by grad_weight.
/// Points with fewer than two rows contribute zero.
inline double hsic_block(const Mat& x, const std::vector<std::uint32_t>& x_rows,
                         double sigma_x, const Mat& y,
                         const std::vector<std::uint32_t>& y_rows,
                         double sigma_y, double grad_weight, Mat* dx, Mat* dy) {
  const std::size_t n = x_rows.size();
  if (n < 2) return 0.0;
  Mat px(n, x.cols()), py(n, y.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.row(x_rows[i]), x.cols(), px.row(i));
    std::copy_n(y.row(y_rows[i]), y.cols(), py.row(i));
  }
  const Mat k = kernel_matrix(px, sigma_x);
  const Mat m = kernel_matrix(py, sigma_y);
  const double value = hsic(k, m);
  if (dx && dy) {
    const Mat kc = center_kernel(k);
    const Mat mc = center_kernel(m);
    const double coef =
        grad_weight / (static_cast<double>(n - 1) * static_cast<double>(n - 1));
    // dL/dK = H·M̃·H = M̃ (H is idempotent), and symmetrically for M. Both
    // entries K_ij and K_ji depend on x_i, hence the factor 2.
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;  // unit diagonal is constant
        {
          const double g =
              2.0 * coef * mc(i, j) * k(i, j) / (sigma_x * sigma_x);
          const double* xi = px.row(i);
          const double* xj = px.row(j);
          double* out = dx->row(x_rows[i]);
          for (std::size_t c = 0; c < x.cols(); ++c)
            out[c] += g * (xj[c] - xi[c]);
        }
        {
          const double g =
              2.0 * coef * kc(i, j) * m(i, j) / (sigma_y * sigma_y);
          const double* yi = py.row(i);
          const double* yj = py.row(j);
          double* out = dy->row(y_rows[i]);
          for (std::size_t c = 0; c < y.cols(); ++c)
            out[c] += g * (yj[c] - yi[c]);
        }
      }
    }
  }
  return value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The combined training step
// ---------------------------------------------------------------------------

struct StepInputs {
  const InteractionGraph* graph = nullptr;      // train graph, unit weights
  const InteractionGraph* rel_graph = nullptr;  // enriched view (when used)
  const PreferenceKnowledge* kp = nullptr;      // pooled vectors (when used)
  const TripleBatch* batch = nullptr;
  const std::vector<double>* noise = nullptr;   // logistic noise per edge
  bool train_mode = true;
  std::optional<double> pinned_sigma_k;  // fixed bandwidths (gradient checks)
  std::optional<double> pinned_sigma_m;
};

/// Eval-mode soft mask per train edge: σ(λ/τ), or all-ones when frozen.
inline std::vector<double> eval_mask(const ModelState& state,
                                     const InteractionGraph& graph,
                                     const StepConfig& cfg) {
  if (cfg.freeze_mask)
    return std::vector<double>(graph.num_edges(), 1.0);
  const auto logits = edge_logits(state.mask, state.embeddings, graph.edges());
  return sample_mask(logits, cfg.tau, {}, /*train_mode=*/false);
}

/// Representations used for scoring/evaluation (deterministic eval mask).
inline Mat eval_representations(const ModelState& state,
                                const InteractionGraph& graph,
                                const StepConfig& cfg) {
  if (state.backbone == Backbone::GMF) return state.embeddings;
  const auto q = eval_mask(state, graph, cfg);
  const auto masked = apply_mask(graph, q);
  return forward_lightgcn(masked, state.embeddings, state.layers);
}

/// Full forward (and, when `grads` is non-null, backward) pass for one
/// batch. Bandwidths follow the kernel config unless pinned in the inputs.
inline LossBreakdown evaluate_step(const ModelState& state,
                                   const StepInputs& in, const StepConfig& cfg,
                                   Grads* grads = nullptr,
                                   StepDiagnostics* diag = nullptr) {
  if (!in.graph || !in.batch)
    throw UsageError("evaluate_step: graph and batch are required");
  const bool lightgcn = state.backbone == Backbone::LightGCN;
  const bool use_pk = cfg.use_pk();
  const bool use_rk = cfg.use_rk();
  const bool use_comp = cfg.use_comp();
  if (use_pk && !in.kp)
    throw UsageError("evaluate_step: preference knowledge required (or --no-pk)");
  if (use_rk && !in.rel_graph)
    throw UsageError("evaluate_step: enriched graph required (or --no-rk)");
  const std::size_t n_edges = in.graph->num_edges();
  const std::size_t num_users = state.num_users;

  // -- mask forward -------------------------------------------------------
  std::vector<double> q(n_edges, 1.0);
  std::vector<double> logits;
  Mat hidden_pre;  // per edge x mask hidden (for backward)
  if (!cfg.freeze_mask) {
    if (in.train_mode && (!in.noise || in.noise->size() != n_edges))
      throw UsageError("evaluate_step: per-edge noise required in train mode");
    logits.resize(n_edges);
    hidden_pre = Mat(n_edges, state.mask.hidden);
    const auto& edges = in.graph->edges();
    for (std::size_t e = 0; e < n_edges; ++e) {
      logits[e] = state.mask.logit(state.embeddings.row_span(edges[e].a),
                                   state.embeddings.row_span(edges[e].b),
                                   hidden_pre.row_span(e));
      const double c = in.train_mode ? (*in.noise)[e] : 0.0;
      q[e] = sigmoid((c + logits[e]) / cfg.tau);
    }
  }

  // -- propagation --------------------------------------------------------
  Mat h_prime;  // on the masked graph G'
  std::vector<Mat> masked_layers;
  InteractionGraph masked;
  if (lightgcn) {
    masked = apply_mask(*in.graph, q);
    h_prime = forward_lightgcn(masked, state.embeddings, state.layers,
                               grads ? &masked_layers : nullptr);
  } else {
    h_prime = state.embeddings;
  }
  Mat h;  // on the unmasked graph G (compression term only)
  if (use_comp)
    h = lightgcn
            ? forward_lightgcn(*in.graph, state.embeddings, state.layers)
            : state.embeddings;
  Mat h_hat;  // on the enriched graph G_rel
  if (use_rk)
    h_hat = lightgcn
                ? forward_lightgcn(*in.rel_graph, state.embeddings,
                                   state.layers)
                : state.embeddings;

  // -- batch node sets ----------------------------------------------------
  std::set<std::uint32_t> user_set, item_set;
  for (const auto& t : in.batch->triples) {
    user_set.insert(t.user);
    item_set.insert(state.item_node(t.pos));
    item_set.insert(state.item_node(t.neg));
  }
  const std::vector<std::uint32_t> batch_users(user_set.begin(),
                                               user_set.end());
  const std::vector<std::uint32_t> batch_items(item_set.begin(),
                                               item_set.end());
  const double batch_nodes =
      static_cast<double>(batch_users.size() + batch_items.size());

  // -- preference rows ẽ for batch nodes ----------------------------------
  // Local matrices aligned with batch_users / batch_items.
  Mat etilde_users, etilde_items;
  std::vector<std::uint32_t> local_users(batch_users.size()),
      local_items(batch_items.size());
  for (std::size_t k = 0; k < local_users.size(); ++k)
    local_users[k] = static_cast<std::uint32_t>(k);
  for (std::size_t k = 0; k < local_items.size(); ++k)
    local_items[k] = static_cast<std::uint32_t>(k);
  if (use_pk) {
    if (in.kp->d != state.d)
      throw UsageError("K_p model dimension mismatch with the model state");
    etilde_users = Mat(batch_users.size(), state.d);
    etilde_items = Mat(batch_items.size(), state.d);
    for (std::size_t k = 0; k < batch_users.size(); ++k) {
      const auto row = state.head.apply(in.kp->user_pooled.row_span(batch_users[k]));
      std::copy(row.begin(), row.end(), etilde_users.row(k));
    }
    for (std::size_t k = 0; k < batch_items.size(); ++k) {
      const auto item = batch_items[k] - num_users;
      const auto row = state.head.apply(in.kp->item_pooled.row_span(item));
      std::copy(row.begin(), row.end(), etilde_items.row(k));
    }
  }

  // Gradient accumulators over node representations.
  const std::size_t n_nodes = state.embeddings.rows();
  Mat d_hprime, d_h, d_hhat, d_etilde_users, d_etilde_items;
  if (grads) {
    d_hprime = Mat(n_nodes, state.d);
    if (use_comp) d_h = Mat(n_nodes, state.d);
    if (use_rk) d_hhat = Mat(n_nodes, state.d);
    if (use_pk) {
      d_etilde_users = Mat(batch_users.size(), state.d);
      d_etilde_items = Mat(batch_items.size(), state.d);
    }
  }
  std::vector<double> d_q(grads && !cfg.freeze_mask ? n_edges : 0, 0.0);

  // -- L_rec ---------------------------------------------------------------
  const double inv_batch = 1.0 / static_cast<double>(in.batch->size());
  double rec = 0.0;
  for (const auto& t : in.batch->triples) {
    const auto u_node = t.user;
    const auto i_node = state.item_node(t.pos);
    const auto j_node = state.item_node(t.neg);
    const auto hu = h_prime.row_span(u_node);
    const double margin = dot(hu, h_prime.row_span(i_node)) -
                          dot(hu, h_prime.row_span(j_node));
    const double term = neg_log_sigmoid(margin);
    double weight = 1.0;  // LightGCN: the mask acts through propagation
    std::size_t edge = InteractionGraph::npos;
    if (!lightgcn && !cfg.freeze_mask) {
      // GMF consumes the mask by weighting each positive's loss with q.
      edge = in.graph->edge_index(u_node, i_node);
      if (edge != InteractionGraph::npos) weight = q[edge];
    }
    rec += weight * term * inv_batch;
    if (grads) {
      // d/dmargin of −log σ(margin) is −(1 − σ(margin)).
      const double dmargin =
          -(1.0 - sigmoid(margin)) * weight * inv_batch;
      auto du = d_hprime.row_span(u_node);
      auto di = d_hprime.row_span(i_node);
      auto dj = d_hprime.row_span(j_node);
      const auto hi = h_prime.row_span(i_node);
      const auto hj = h_prime.row_span(j_node);
      for (std::size_t k = 0; k < state.d; ++k) {
        du[k] += dmargin * (hi[k] - hj[k]);
        di[k] += dmargin * hu[k];
        dj[k] += -dmargin * hu[k];
      }
      if (edge != InteractionGraph::npos)
        d_q[edge] += term * inv_batch;
    }
  }

  // -- L_prf / L_rel --------------------------------------------------------
  const double alpha = cfg.effective_alpha();
  double prf = 0.0, rel = 0.0;
  if (use_pk) {
    const double w = alpha / batch_nodes;
    prf += detail::infonce_sum(
        {&h_prime, &batch_users, &etilde_users, &local_users}, cfg.tau_prime,
        cfg.infonce_include_positive, w, grads ? &d_hprime : nullptr,
        grads ? &d_etilde_users : nullptr, diag);
    prf += detail::infonce_sum(
        {&h_prime, &batch_items, &etilde_items, &local_items}, cfg.tau_prime,
        cfg.infonce_include_positive, w, grads ? &d_hprime : nullptr,
        grads ? &d_etilde_items : nullptr, diag);
    prf /= batch_nodes;
  }
  if (use_rk) {
    const double w = alpha / batch_nodes;
    rel += detail::infonce_sum(
        {&h_prime, &batch_users, &h_hat, &batch_users}, cfg.tau_prime,
        cfg.infonce_include_positive, w, grads ? &d_hprime : nullptr,
        grads ? &d_hhat : nullptr, diag);
    rel += detail::infonce_sum(
        {&h_prime, &batch_items, &h_hat, &batch_items}, cfg.tau_prime,
        cfg.infonce_include_positive, w, grads ? &d_hprime : nullptr,
        grads ? &d_hhat : nullptr, diag);
    rel /= batch_nodes;
  }

  // -- L_comp ---------------------------------------------------------------
  double comp = 0.0;
  if (use_comp) {
    const double beta = cfg.effective_beta();
    auto bandwidth = [&](const Mat& pts, const std::vector<std::uint32_t>& rows,
                         bool k_side) {
      if (k_side && in.pinned_sigma_k) return *in.pinned_sigma_k;
      if (!k_side && in.pinned_sigma_m) return *in.pinned_sigma_m;
      if (cfg.kernel.mode == KernelConfig::Mode::Fixed)
        return k_side ? cfg.kernel.sigma_k : cfg.kernel.sigma_m;
      const double med = median_pairwise_distance(pts, rows);
      return med > 0.0 ? med : 1.0;
    };
    for (const auto* nodes : {&batch_users, &batch_items}) {
      const double sigma_k = bandwidth(h, *nodes, true);
      const double sigma_m = bandwidth(h_prime, *nodes, false);
      if (diag) {
        diag->sigma_k = sigma_k;
        diag->sigma_m = sigma_m;
      }
      comp += detail::hsic_block(h, *nodes, sigma_k, h_prime, *nodes, sigma_m,
                                 beta, grads ? &d_h : nullptr,
                                 grads ? &d_hprime : nullptr);
    }
  }

  const LossBreakdown losses = total_loss(rec, prf, rel, comp, cfg);
  if (!grads) return losses;

  // ==========================================================================
  // Backward
  // ==========================================================================
  *grads = Grads::zeros_like(state);

  // -- projection head from d_etilde ----------------------------------------
  if (use_pk) {
    auto head_backward = [&](const Mat& d_rows,
                             const std::vector<std::uint32_t>& nodes,
                             bool users) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto t = users
                           ? in.kp->user_pooled.row_span(nodes[k])
                           : in.kp->item_pooled.row_span(nodes[k] - num_users);
        const auto dout = d_rows.row_span(k);
        if (!state.head.has_hidden) {
          for (std::size_t r = 0; r < state.d; ++r) {
            const double g = dout[r];
            if (g == 0.0) continue;
            grads->head_b[r] += g;
            double* wrow = grads->head_w.row(r);
            for (std::size_t c = 0; c < state.head.d_t; ++c)
              wrow[c] += g * t[c];
          }
        } else {
          // Recompute the hidden activation for this subject.
          std::vector<double> a1(state.head.hidden), z(state.head.hidden);
          for (std::size_t hid = 0; hid < state.head.hidden; ++hid) {
            a1[hid] = state.head.b1[hid] + dot(state.head.w1.row_span(hid), t);
            z[hid] = a1[hid] > 0.0 ? a1[hid] : 0.0;
          }
          std::vector<double> dz(state.head.hidden, 0.0);
          for (std::size_t r = 0; r < state.d; ++r) {
            const double g = dout[r];
            if (g == 0.0) continue;
            grads->head_b[r] += g;
            double* w2row = grads->head_w2.row(r);
            const double* w2 = state.head.w2.row(r);
            for (std::size_t hid = 0; hid < state.head.hidden; ++hid) {
              w2row[hid] += g * z[hid];
              dz[hid] += g * w2[hid];
            }
          }
          for (std::size_t hid = 0; hid < state.head.hidden; ++hid) {
            if (a1[hid] <= 0.0) continue;
            grads->head_b1[hid] += dz[hid];
            double* w1row = grads->head_w1.row(hid);
            for (std::size_t c = 0; c < state.head.d_t; ++c)
              w1row[c] += dz[hid] * t[c];
          }
        }
      }
    };
    head_backward(d_etilde_users, batch_users, true);
    head_backward(d_etilde_items, batch_items, false);
  }

  // -- propagation backward --------------------------------------------------
  std::vector<double> edge_entry_grad;  // ∂L/∂(normalized entry), per edge
  auto propagate_fixed_back = [&](const InteractionGraph& g, const Mat& dout) {
    // dE += (1/(L+1)) Σ_l Â^l dout for a fixed adjacency.
    const double inv = 1.0 / (state.layers + 1);
    Mat y = dout;
    for (auto& v : y.data()) v *= inv;
    for (std::size_t k = 0; k < y.data().size(); ++k)
      grads->embeddings.data()[k] += y.data()[k];
    for (int l = 0; l < state.layers; ++l) {
      y = g.propagate(y);
      for (std::size_t k = 0; k < y.data().size(); ++k)
        grads->embeddings.data()[k] += y.data()[k];
    }
  };
  if (lightgcn) {
    // Masked view: accumulate both dE and the adjacency-entry gradients.
    edge_entry_grad.assign(n_edges, 0.0);
    const double inv = 1.0 / (state.layers + 1);
    Mat r = d_hprime;
    for (auto& v : r.data()) v *= inv;  // R_L
    for (int l = state.layers; l >= 1; --l) {
      masked.accumulate_entry_grad(r, masked_layers[l - 1], edge_entry_grad);
      Mat next = masked.propagate(r);
      for (std::size_t k = 0; k < next.data().size(); ++k)
        next.data()[k] += d_hprime.data()[k] * inv;
      r = std::move(next);
    }
    for (std::size_t k = 0; k < r.data().size(); ++k)
      grads->embeddings.data()[k] += r.data()[k];

    if (use_comp) propagate_fixed_back(*in.graph, d_h);
    if (use_rk) propagate_fixed_back(*in.rel_graph, d_hhat);
  } else {
    auto add = [&](const Mat& m) {
      if (m.empty()) return;
      for (std::size_t k = 0; k < m.data().size(); ++k)
        grads->embeddings.data()[k] += m.data()[k];
    };
    add(d_hprime);
    if (use_comp) add(d_h);
    if (use_rk) add(d_hhat);
  }

  // -- normalization backward: entry grads -> dq ----------------------------
  if (!cfg.freeze_mask && lightgcn) {
    const auto& degrees = masked.weighted_degrees();
    const auto& edges = in.graph->edges();
    std::vector<double> t_node(n_nodes, 0.0);
    for (std::size_t e = 0; e < n_edges; ++e) {
      const double contrib = edge_entry_grad[e] * masked.normalized_weight(e);
      t_node[edges[e].a] += contrib;
      t_node[edges[e].b] += contrib;
    }
    for (std::size_t e = 0; e < n_edges; ++e) {
      const double da = degrees[edges[e].a];
      const double db = degrees[edges[e].b];
      if (da <= 0.0 || db <= 0.0) continue;
      d_q[e] += edge_entry_grad[e] / std::sqrt(da * db) -
                t_node[edges[e].a] / (2.0 * da) -
                t_node[edges[e].b] / (2.0 * db);
    }
  }

  // -- mask generator backward ----------------------------------------------
  if (!cfg.freeze_mask) {
    const auto& edges = in.graph->edges();
    for (std::size_t e = 0; e < n_edges; ++e) {
      if (d_q[e] == 0.0) continue;
      const double dlogit = d_q[e] * q[e] * (1.0 - q[e]) / cfg.tau;
      grads->mask_b2 += dlogit;
      const auto eu = state.embeddings.row_span(edges[e].a);
      const auto ei = state.embeddings.row_span(edges[e].b);
      auto du = grads->embeddings.row_span(edges[e].a);
      auto di = grads->embeddings.row_span(edges[e].b);
      for (std::size_t hid = 0; hid < state.mask.hidden; ++hid) {
        const double a = hidden_pre(e, hid);
        const double z = a > 0.0 ? a : 0.0;
        grads->mask_w2[hid] += dlogit * z;
        if (a <= 0.0) continue;
        const double da1 = dlogit * state.mask.w2[hid];
        grads->mask_b1[hid] += da1;
        double* w1row = grads->mask_w1.row(hid);
        const double* w1 = state.mask.w1.row(hid);
        for (std::size_t k = 0; k < state.d; ++k) {
          w1row[k] += da1 * eu[k];
          w1row[state.d + k] += da1 * ei[k];
          du[k] += da1 * w1[k];
          di[k] += da1 * w1[state.d + k];
        }
      }
    }
  }

  for (auto& block : grads->blocks(state)) {
    for (std::size_t k = 0; k < block.size; ++k) {
      if (!std::isfinite(block.data[k]))
        throw NumericError("backward: non-finite gradient in " + block.name);
    }
  }
  return losses;
}

}  // namespace llard
