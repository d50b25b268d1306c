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
#include <map>
#include <vector>

#include "llard/common.hpp"
#include "llard/dataset.hpp"
#include "llard/matrix.hpp"

namespace llard {

/// Undirected edge over the unified node index space (users first, then
/// items at offset num_users). a < b always.
struct GraphEdge {
  std::uint32_t a, b;
  bool operator<(const GraphEdge& o) const {
    return std::tie(a, b) < std::tie(o.a, o.b);
  }
  bool operator==(const GraphEdge& o) const { return a == o.a && b == o.b; }
};

/// Sparse bipartite (optionally heterogeneous) interaction graph with a
/// symmetric-normalized, edge-weighted adjacency D^{-1/2}(A∘W)D^{-1/2}.
/// Immutable after construction.
class InteractionGraph {
public:
  InteractionGraph() = default;

  /// `edges` may contain user-item or user-user pairs (unified indices);
  /// duplicates collapse to one edge with the max weight.
  InteractionGraph(std::size_t num_users, std::size_t num_items,
                   const std::vector<GraphEdge>& edges,
                   const std::vector<double>& weights = {})
      : num_users_(num_users), num_items_(num_items) {
    const std::size_t n = num_nodes();
    std::map<GraphEdge, double> uniq;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      GraphEdge ed = edges[e];
      if (ed.a == ed.b) throw DataError("graph: self-loop rejected");
      if (ed.a > ed.b) std::swap(ed.a, ed.b);
      if (ed.b >= n) {
        throw DataError("graph: node index " + std::to_string(ed.b) +
                        " out of range [0," + std::to_string(n) + ")");
      }
      if (ed.a >= num_users_ && ed.b >= num_users_)
        throw DataError("graph: item-item edges are not supported");
      const double w = weights.empty() ? 1.0 : weights[e];
      if (!(w >= 0.0 && w <= 1.0) || !std::isfinite(w))
        throw DataError("graph: edge weight outside [0,1]");
      auto [it, inserted] = uniq.emplace(ed, w);
      if (!inserted) it->second = std::max(it->second, w);
    }
    edges_.reserve(uniq.size());
    weights_.reserve(uniq.size());
    for (const auto& [ed, w] : uniq) {
      edges_.push_back(ed);
      weights_.push_back(w);
    }
    build_structure();
    set_weights(weights_);
  }

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_nodes() const { return num_users_ + num_items_; }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<GraphEdge>& edges() const { return edges_; }
  const std::vector<double>& edge_weights() const { return weights_; }
  const std::vector<double>& weighted_degrees() const { return degree_; }

  std::uint32_t item_node(std::uint32_t item) const {
    return static_cast<std::uint32_t>(num_users_) + item;
  }

  /// Index of the undirected edge (a,b), or npos.
  std::size_t edge_index(std::uint32_t a, std::uint32_t b) const {
    if (a > b) std::swap(a, b);
    const auto it = edge_lookup_.find(key(a, b));
    return it == edge_lookup_.end() ? npos : it->second;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Replace edge weights and renormalize in place (used by the edge mask;
  /// the structure is untouched so per-edge alignment is preserved).
  void set_weights(const std::vector<double>& weights) {
    if (weights.size() != edges_.size())
      throw DataError("graph: weight vector size mismatch");
    weights_ = weights;
    degree_.assign(num_nodes(), 0.0);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      degree_[edges_[e].a] += weights_[e];
      degree_[edges_[e].b] += weights_[e];
    }
    for (std::size_t d = 0; d < entry_edge_.size(); ++d) {
      const std::size_t e = entry_edge_[d];
      const double da = degree_[edges_[e].a];
      const double db = degree_[edges_[e].b];
      const double denom = std::sqrt(da * db);
      norm_val_[d] = denom > 0.0 ? weights_[e] / denom : 0.0;
      if (!std::isfinite(norm_val_[d]))
        throw NumericError("graph: non-finite normalized entry");
    }
  }

  /// Normalized value shared by the directed entries (a,b) and (b,a).
  double normalized_weight(std::size_t edge) const {
    return norm_at_edge_[edge] == npos ? 0.0 : norm_val_[norm_at_edge_[edge]];
  }

  double normalized_entry(std::uint32_t a, std::uint32_t b) const {
    const std::size_t e = edge_index(a, b);
    return e == npos ? 0.0 : normalized_weight(e);
  }

  /// Y = Â X (normalized adjacency times a node matrix).
  Mat propagate(const Mat& x) const {
    Mat y(x.rows(), x.cols());
    for (std::size_t row = 0; row < num_nodes(); ++row) {
      double* yr = y.row(row);
      for (std::size_t d = row_ptr_[row]; d < row_ptr_[row + 1]; ++d) {
        const double v = norm_val_[d];
        if (v == 0.0) continue;
        const double* xr = x.row(col_idx_[d]);
        for (std::size_t k = 0; k < x.cols(); ++k) yr[k] += v * xr[k];
      }
    }
    return y;
  }

  /// Accumulate the adjacency cotangent: for every directed entry (r,c),
  /// out_edge_grad[edge(r,c)] += R.row(r) · X.row(c). Used by the
  /// mask-generator backward pass.
  void accumulate_entry_grad(const Mat& r_mat, const Mat& x_mat,
                             std::vector<double>& out_edge_grad) const {
    for (std::size_t row = 0; row < num_nodes(); ++row) {
      const double* rr = r_mat.row(row);
      for (std::size_t d = row_ptr_[row]; d < row_ptr_[row + 1]; ++d) {
        const double* xr = x_mat.row(col_idx_[d]);
        double s = 0.0;
        for (std::size_t k = 0; k < x_mat.cols(); ++k) s += rr[k] * xr[k];
        out_edge_grad[entry_edge_[d]] += s;
      }
    }
  }

  /// Dense copy of the normalized adjacency (test oracles only; n <= ~100).
  Mat dense() const {
    Mat a(num_nodes(), num_nodes());
    for (std::size_t row = 0; row < num_nodes(); ++row)
      for (std::size_t d = row_ptr_[row]; d < row_ptr_[row + 1]; ++d)
        a(row, col_idx_[d]) = norm_val_[d];
    return a;
  }

private:
  static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  void build_structure() {
    const std::size_t n = num_nodes();
    row_ptr_.assign(n + 1, 0);
    for (const auto& ed : edges_) {
      ++row_ptr_[ed.a + 1];
      ++row_ptr_[ed.b + 1];
    }
    for (std::size_t i = 0; i < n; ++i) row_ptr_[i + 1] += row_ptr_[i];
    col_idx_.resize(2 * edges_.size());
    entry_edge_.resize(2 * edges_.size());
    norm_val_.assign(2 * edges_.size(), 0.0);
    norm_at_edge_.assign(edges_.size(), npos);
    std::vector<std::size_t> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const auto& ed = edges_[e];
      const std::size_t d1 = cursor[ed.a]++;
      const std::size_t d2 = cursor[ed.b]++;
      col_idx_[d1] = ed.b;
      col_idx_[d2] = ed.a;
      entry_edge_[d1] = e;
      entry_edge_[d2] = e;
      norm_at_edge_[e] = d1;
      edge_lookup_[key(ed.a, ed.b)] = e;
    }
  }

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<GraphEdge> edges_;      // canonical order (a,b) ascending
  std::vector<double> weights_;
  std::vector<double> degree_;        // weighted degrees
  std::vector<std::size_t> row_ptr_;  // CSR over directed entries
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> norm_val_;
  std::vector<std::size_t> entry_edge_;   // directed entry -> edge index
  std::vector<std::size_t> norm_at_edge_; // edge -> one directed entry
  std::unordered_map<std::uint64_t, std::size_t> edge_lookup_;
};

/// Build the (optionally enriched) interaction graph from the dataset's
/// train edges plus optional extra edges with optional weights.
inline InteractionGraph build_graph(
    const Dataset& ds, const std::vector<GraphEdge>& extra_edges = {},
    const std::vector<double>& extra_weights = {}) {
  std::vector<GraphEdge> edges;
  std::vector<double> weights;
  edges.reserve(ds.train.size() + extra_edges.size());
  const auto offset = static_cast<std::uint32_t>(ds.num_users());
  for (const auto& r : ds.train) {
    edges.push_back({r.user, offset + r.item});
    weights.push_back(1.0);
  }
  for (std::size_t e = 0; e < extra_edges.size(); ++e) {
    edges.push_back(extra_edges[e]);
    weights.push_back(extra_weights.empty() ? 1.0 : extra_weights[e]);
  }
  return InteractionGraph(ds.num_users(), ds.num_items(), edges, weights);
}

/// Train-edge list in the graph's canonical edge order, as (u, i) dataset
/// indices. Only user-item edges are returned.
inline std::vector<IndexPair> user_item_edges(const InteractionGraph& g) {
  std::vector<IndexPair> out;
  out.reserve(g.num_edges());
  const auto offset = static_cast<std::uint32_t>(g.num_users());
  for (const auto& ed : g.edges()) {
    if (ed.a < offset && ed.b >= offset) out.push_back({ed.a, ed.b - offset});
  }
  return out;
}

}  // namespace llard
