#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "granet/pointcloud.hpp"
#include "granet/sparse.hpp"

namespace granet {

/// Directed KNN graph over a point subset, with the symmetrically normalized
/// adjacency and its cached hop powers.
struct SceneGraph {
  std::vector<Vec3> coords;               // node positions (subset order)
  std::vector<std::size_t> node_index;    // original cloud index per node
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (node, neighbor)
  SparseMatrix adjacency;                 // raw weights W (one entry per edge)
  std::vector<double> degree;             // of the symmetrized W
  std::vector<SparseMatrix> hop_powers;   // A^1 .. A^p of A = D^-1/2 W_sym D^-1/2

  std::size_t node_count() const { return coords.size(); }

  /// Neighbor list of node i (its out-edges), sorted by construction.
  std::pair<const std::size_t*, const std::size_t*> neighbors(std::size_t i) const {
    return {adjacency.col.data() + adjacency.row_ptr[i],
            adjacency.col.data() + adjacency.row_ptr[i + 1]};
  }
};

/// Each node gets out-edges to its k nearest Euclidean neighbors (self excluded),
/// distance ties broken by lower point index. Unit edge weights.
inline SceneGraph knn_graph(const std::vector<Vec3>& points, std::size_t k,
                            std::vector<std::size_t> node_index = {}) {
  const std::size_t n = points.size();
  if (n < 2) throw std::invalid_argument("knn_graph: need at least 2 nodes");
  if (k >= n)
    throw std::invalid_argument("knn_graph: k=" + std::to_string(k) + " >= node count " +
                                std::to_string(n));
  SceneGraph g;
  g.coords = points;
  if (node_index.empty()) {
    node_index.resize(n);
    for (std::size_t i = 0; i < n; ++i) node_index[i] = i;
  } else if (node_index.size() != n) {
    throw std::invalid_argument("knn_graph: node_index size mismatch");
  }
  g.node_index = std::move(node_index);
  g.adjacency = SparseMatrix::empty(n, n);
  g.adjacency.row_ptr[0] = 0;
  g.edges.reserve(n * k);

  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(sq_dist(points[i], points[j]), j);
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    // partial_sort on (distance, index) pairs resolves ties toward the lower index
    for (std::size_t r = 0; r < k; ++r) {
      g.edges.emplace_back(i, cand[r].second);
      g.adjacency.col.push_back(cand[r].second);
      g.adjacency.val.push_back(1.0);
    }
    std::sort(g.adjacency.col.begin() + static_cast<std::ptrdiff_t>(g.adjacency.row_ptr[i]),
              g.adjacency.col.end());
    g.adjacency.row_ptr[i + 1] = g.adjacency.col.size();
  }
  return g;
}

/// Symmetrizes W as max(W, W^T), recomputes degrees, and caches A^1..A^p where
/// A = D^-1/2 W D^-1/2. Zero-degree nodes keep zero rows and columns (d^-1/2 = 0).
inline void normalized_adjacency_powers(SceneGraph& g, std::size_t p) {
  if (p < 1) throw std::invalid_argument("normalized_adjacency_powers: p must be >= 1");
  const std::size_t n = g.adjacency.n_rows;
  const SparseMatrix wt = g.adjacency.transposed();

  SparseMatrix sym = SparseMatrix::empty(n, n);
  sym.row_ptr[0] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ka = g.adjacency.row_ptr[i], ea = g.adjacency.row_ptr[i + 1];
    std::size_t kb = wt.row_ptr[i], eb = wt.row_ptr[i + 1];
    while (ka < ea || kb < eb) {
      std::size_t ca = ka < ea ? g.adjacency.col[ka] : SIZE_MAX;
      std::size_t cb = kb < eb ? wt.col[kb] : SIZE_MAX;
      if (ca == cb) {
        sym.col.push_back(ca);
        sym.val.push_back(std::max(g.adjacency.val[ka], wt.val[kb]));
        ++ka;
        ++kb;
      } else if (ca < cb) {
        sym.col.push_back(ca);
        sym.val.push_back(g.adjacency.val[ka]);
        ++ka;
      } else {
        sym.col.push_back(cb);
        sym.val.push_back(wt.val[kb]);
        ++kb;
      }
    }
    sym.row_ptr[i + 1] = sym.col.size();
  }

  g.degree.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = sym.row_ptr[i]; k < sym.row_ptr[i + 1]; ++k)
      g.degree[i] += sym.val[k];

  std::vector<double> dinv(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    dinv[i] = g.degree[i] > 0.0 ? 1.0 / std::sqrt(g.degree[i]) : 0.0;

  SparseMatrix a = sym;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
      a.val[k] *= dinv[i] * dinv[a.col[k]];

  g.hop_powers.clear();
  g.hop_powers.reserve(p);
  g.hop_powers.push_back(std::move(a));
  for (std::size_t q = 1; q < p; ++q)
    g.hop_powers.push_back(multiply(g.hop_powers.back(), g.hop_powers.front()));
}

/// Greedy max-min sampling from `seed_index`; each step picks the point farthest from
/// the selected set, distance ties broken by lower index. Output order = selection order.
inline std::vector<std::size_t> farthest_point_sampling(const std::vector<Vec3>& points,
                                                        std::size_t m,
                                                        std::size_t seed_index = 0) {
  const std::size_t n = points.size();
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sampling: m=" + std::to_string(m) +
                                " out of range for " + std::to_string(n) + " points");
  if (seed_index >= n)
    throw std::invalid_argument("farthest_point_sampling: seed index out of range");
  std::vector<std::size_t> out;
  out.reserve(m);
  out.push_back(seed_index);
  std::vector<char> selected(n, 0);
  selected[seed_index] = 1;
  std::vector<double> min_d(n);
  for (std::size_t i = 0; i < n; ++i) min_d[i] = sq_dist(points[i], points[seed_index]);
  for (std::size_t s = 1; s < m; ++s) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!selected[i] && min_d[i] > best_d) {
        best_d = min_d[i];
        best = i;
      }
    out.push_back(best);
    selected[best] = 1;
    for (std::size_t i = 0; i < n; ++i)
      min_d[i] = std::min(min_d[i], sq_dist(points[i], points[best]));
  }
  return out;
}

}  // namespace granet
