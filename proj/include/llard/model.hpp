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
#include <fstream>
#include <string>
#include <vector>

#include "llard/graph.hpp"
#include "llard/matrix.hpp"
#include "llard/preference.hpp"

namespace llard {

enum class Backbone { GMF, LightGCN };

inline const char* to_string(Backbone b) {
  return b == Backbone::GMF ? "gmf" : "lightgcn";
}

inline Backbone backbone_from_string(const std::string& s) {
  const auto lowered = to_lower(s);
  if (lowered == "gmf") return Backbone::GMF;
  if (lowered == "lightgcn") return Backbone::LightGCN;
  throw UsageError("unknown backbone: " + s + " (expected gmf|lightgcn)");
}

// ---------------------------------------------------------------------------
// Mask generator Φ: concatenated pair embedding (2d) -> hidden(64, ReLU) ->
// scalar logit.
// ---------------------------------------------------------------------------

struct MaskGenerator {
  std::size_t d = 0;
  std::size_t hidden = 64;
  Mat w1;                   // hidden x 2d
  std::vector<double> b1;   // hidden
  std::vector<double> w2;   // hidden
  double b2 = 0.0;

  static MaskGenerator init(std::size_t d, Rng& rng, std::size_t hidden = 64) {
    MaskGenerator m;
    m.d = d;
    m.hidden = hidden;
    m.w1 = Mat::randn(hidden, 2 * d, 0.1, rng);
    m.b1.assign(hidden, 0.0);
    m.w2.resize(hidden);
    for (auto& x : m.w2) x = 0.1 * rng.normal();
    return m;
  }

  double logit(std::span<const double> e_u, std::span<const double> e_i,
               std::span<double> hidden_pre = {}) const {
    double out = b2;
    for (std::size_t h = 0; h < hidden; ++h) {
      const double* row = w1.row(h);
      double a = b1[h];
      for (std::size_t k = 0; k < d; ++k) a += row[k] * e_u[k];
      for (std::size_t k = 0; k < d; ++k) a += row[d + k] * e_i[k];
      if (!hidden_pre.empty()) hidden_pre[h] = a;
      if (a > 0.0) out += w2[h] * a;
    }
    return out;
  }
};

/// One finite logit per edge, order-aligned with the edge list. Edges are
/// (user, item_node) pairs over the unified index space; inputs are the
/// layer-0 embedding rows of the endpoints.
inline std::vector<double> edge_logits(const MaskGenerator& mask,
                                       const Mat& embeddings,
                                       const std::vector<GraphEdge>& edges) {
  std::vector<double> logits(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    logits[e] = mask.logit(embeddings.row_span(edges[e].a),
                           embeddings.row_span(edges[e].b));
    if (!std::isfinite(logits[e]))
      throw NumericError("edge_logits: non-finite logit");
  }
  return logits;
}

// ---------------------------------------------------------------------------
// Gumbel-Softmax edge mask: q = σ((log δ − log(1−δ) + λ)/τ), δ ~ U(0,1).
// ---------------------------------------------------------------------------

/// Logistic noise term log δ − log(1−δ) per edge; δ drawn in (ε, 1−ε).
inline std::vector<double> sample_logistic_noise(std::size_t n, Rng& rng) {
  std::vector<double> c(n);
  for (auto& x : c) {
    const double delta = rng.real_open(1e-6);
    x = std::log(delta) - std::log1p(-delta);
  }
  return c;
}

/// In eval mode δ is pinned at 0.5, so q = σ(λ/τ) deterministically.
inline std::vector<double> sample_mask(const std::vector<double>& logits,
                                       double tau,
                                       const std::vector<double>& noise,
                                       bool train_mode) {
  if (tau <= 0.0) throw NumericError("sample_mask: tau must be positive");
  std::vector<double> q(logits.size());
  for (std::size_t e = 0; e < logits.size(); ++e) {
    const double c = train_mode ? noise[e] : 0.0;
    q[e] = sigmoid((c + logits[e]) / tau);
  }
  return q;
}

/// Weighted masked graph: soft q as edge weights entering the symmetric
/// normalization (training path); `hard_edges` applies the q >= 0.5 export
/// rule.
inline InteractionGraph apply_mask(const InteractionGraph& g,
                                   const std::vector<double>& q) {
  InteractionGraph masked = g;
  masked.set_weights(q);
  return masked;
}

inline std::vector<std::size_t> hard_edges(const std::vector<double>& q) {
  std::vector<std::size_t> keep;
  for (std::size_t e = 0; e < q.size(); ++e)
    if (q[e] >= 0.5) keep.push_back(e);
  return keep;
}

// ---------------------------------------------------------------------------
// Backbone forward passes
// ---------------------------------------------------------------------------

/// LightGCN propagation: h^(0) = table, h^(l+1) = Â h^(l), output the mean
/// over layers 0..L. When `layer_outputs` is given, all X_l are stored for
/// the backward pass.
inline Mat forward_lightgcn(const InteractionGraph& g, const Mat& table,
                            int layers, std::vector<Mat>* layer_outputs = nullptr) {
  if (layers < 0) throw UsageError("forward_lightgcn: layers must be >= 0");
  Mat acc = table;
  Mat x = table;
  if (layer_outputs) {
    layer_outputs->clear();
    layer_outputs->push_back(x);
  }
  for (int l = 0; l < layers; ++l) {
    x = g.propagate(x);
    if (layer_outputs) layer_outputs->push_back(x);
    for (std::size_t k = 0; k < acc.data().size(); ++k)
      acc.data()[k] += x.data()[k];
  }
  const double inv = 1.0 / (layers + 1);
  for (auto& v : acc.data()) v *= inv;
  return acc;
}

/// GMF score: element-wise product summed (unit output weights).
inline double forward_gmf(const Mat& table, std::uint32_t user_node,
                          std::uint32_t item_node) {
  return dot(table.row_span(user_node), table.row_span(item_node));
}

/// Dense score vector over all items for one user: y_i = h_u · h_{item i}.
inline std::vector<double> score_all(const Mat& h, std::uint32_t user,
                                     std::size_t num_users,
                                     std::size_t num_items) {
  std::vector<double> scores(num_items);
  const auto hu = h.row_span(user);
  for (std::size_t i = 0; i < num_items; ++i)
    scores[i] = dot(hu, h.row_span(num_users + i));
  return scores;
}

// ---------------------------------------------------------------------------
// Model state θ_f and the flat parameter view shared by the optimizer,
// finite-difference checks, and checkpointing.
// ---------------------------------------------------------------------------

struct ModelState {
  Backbone backbone = Backbone::LightGCN;
  int layers = 3;
  std::size_t d = 64;
  std::size_t num_users = 0, num_items = 0;
  Mat embeddings;       // (U+I) x d, init zero-mean scale 0.1
  MaskGenerator mask;
  ProjectionHead head;  // pooled d_t -> d; trained through the alignment loss

  static ModelState init(Backbone backbone, std::size_t num_users,
                         std::size_t num_items, std::size_t d, int layers,
                         std::size_t d_t, std::uint64_t seed,
                         bool head_hidden = false) {
    ModelState s;
    s.backbone = backbone;
    s.layers = layers;
    s.d = d;
    s.num_users = num_users;
    s.num_items = num_items;
    Rng rng(derive_seed(seed, /*stream=*/0x30de1));
    s.embeddings = Mat::randn(num_users + num_items, d, 0.1, rng);
    s.mask = MaskGenerator::init(d, rng);
    s.head = ProjectionHead::init(d, d_t == 0 ? 1 : d_t, rng, head_hidden);
    return s;
  }

  std::uint32_t item_node(std::uint32_t item) const {
    return static_cast<std::uint32_t>(num_users) + item;
  }
};

struct ParamBlock {
  std::string name;
  double* data;
  std::size_t size;
};

/// All trainable arrays in checkpoint order.
inline std::vector<ParamBlock> param_blocks(ModelState& s) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"embeddings", s.embeddings.data().data(),
                    s.embeddings.data().size()});
  blocks.push_back({"mask.w1", s.mask.w1.data().data(),
                    s.mask.w1.data().size()});
  blocks.push_back({"mask.b1", s.mask.b1.data(), s.mask.b1.size()});
  blocks.push_back({"mask.w2", s.mask.w2.data(), s.mask.w2.size()});
  blocks.push_back({"mask.b2", &s.mask.b2, 1});
  if (s.head.has_hidden) {
    blocks.push_back({"head.w1", s.head.w1.data().data(),
                      s.head.w1.data().size()});
    blocks.push_back({"head.b1", s.head.b1.data(), s.head.b1.size()});
    blocks.push_back({"head.w2", s.head.w2.data().data(),
                      s.head.w2.data().size()});
  } else {
    blocks.push_back({"head.w", s.head.w.data().data(),
                      s.head.w.data().size()});
  }
  blocks.push_back({"head.b", s.head.b.data(), s.head.b.size()});
  return blocks;
}

inline std::size_t total_params(ModelState& s) {
  std::size_t n = 0;
  for (const auto& b : param_blocks(s)) n += b.size;
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O. Sections are float32, so saving first rounds the live
// state through float32; a reloaded checkpoint then reproduces forward
// passes bit-for-bit.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  int epoch = 0;
  double best_val_metric = 0.0;
  std::string config_hash;
};

inline void quantize_state(ModelState& s, std::vector<double>* moments_m,
                           std::vector<double>* moments_v) {
  for (auto& block : param_blocks(s))
    quantize_f32(std::span<double>(block.data, block.size));
  if (moments_m) quantize_f32(std::span<double>(*moments_m));
  if (moments_v) quantize_f32(std::span<double>(*moments_v));
}

inline void save_checkpoint(const std::string& path, ModelState& s,
                            std::vector<double>& adam_m,
                            std::vector<double>& adam_v,
                            const CheckpointMeta& meta) {
  quantize_state(s, &adam_m, &adam_v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << "LLARD_CKPT v1\n";
  out << to_string(s.backbone) << ' ' << s.d << ' ' << s.layers << ' '
      << s.num_users << ' ' << s.num_items << ' ' << s.head.d_t << ' '
      << (s.head.has_hidden ? 1 : 0) << ' ' << s.head.hidden << ' '
      << s.mask.hidden << '\n';
  char metric[32];
  std::snprintf(metric, sizeof(metric), "%.17g", meta.best_val_metric);
  out << meta.epoch << ' ' << metric << ' '
      << (meta.config_hash.empty() ? "-" : meta.config_hash) << '\n';
  for (const auto& block : param_blocks(s))
    write_f32(out, std::span<const double>(block.data, block.size));
  out << adam_m.size() << '\n';
  write_f32(out, std::span<const double>(adam_m));
  write_f32(out, std::span<const double>(adam_v));
}

inline ModelState load_checkpoint(const std::string& path,
                                  std::vector<double>* adam_m = nullptr,
                                  std::vector<double>* adam_v = nullptr,
                                  CheckpointMeta* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LLARD_CKPT v1")
    throw DataError(path + ": not a checkpoint");
  std::string backbone, config_hash;
  std::size_t d, nu, ni, d_t, head_hidden_dim, mask_hidden;
  int layers, has_hidden, epoch;
  double best;
  in >> backbone >> d >> layers >> nu >> ni >> d_t >> has_hidden >>
      head_hidden_dim >> mask_hidden;
  in >> epoch >> best >> config_hash;
  std::getline(in, line);

  ModelState s;
  s.backbone = backbone_from_string(backbone);
  s.d = d;
  s.layers = layers;
  s.num_users = nu;
  s.num_items = ni;
  s.embeddings = Mat(nu + ni, d);
  s.mask.d = d;
  s.mask.hidden = mask_hidden;
  s.mask.w1 = Mat(mask_hidden, 2 * d);
  s.mask.b1.assign(mask_hidden, 0.0);
  s.mask.w2.assign(mask_hidden, 0.0);
  s.head.d = d;
  s.head.d_t = d_t;
  s.head.has_hidden = has_hidden != 0;
  s.head.hidden = head_hidden_dim;
  s.head.b.assign(d, 0.0);
  if (s.head.has_hidden) {
    s.head.w1 = Mat(head_hidden_dim, d_t);
    s.head.b1.assign(head_hidden_dim, 0.0);
    s.head.w2 = Mat(d, head_hidden_dim);
  } else {
    s.head.w = Mat(d, d_t);
  }
  for (auto& block : param_blocks(s))
    read_f32(in, std::span<double>(block.data, block.size));
  if (!std::getline(in, line)) throw DataError(path + ": truncated moments");
  const std::size_t n_moments = std::stoul(line);
  std::vector<double> m(n_moments), v(n_moments);
  read_f32(in, std::span<double>(m));
  read_f32(in, std::span<double>(v));
  if (adam_m) *adam_m = std::move(m);
  if (adam_v) *adam_v = std::move(v);
  if (meta) {
    meta->epoch = epoch;
    meta->best_val_metric = best;
    meta->config_hash = config_hash == "-" ? "" : config_hash;
  }
  return s;
}

}  // namespace llard
