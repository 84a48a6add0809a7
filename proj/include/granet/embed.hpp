#pragma once

#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "granet/edgeconv.hpp"
#include "granet/graph.hpp"
#include "granet/nn.hpp"
#include "granet/pointcloud.hpp"
#include "granet/tape.hpp"

namespace granet {

struct GfeConfig {
  std::size_t hops = 4;        // propagation depth p
  std::size_t embed_dim = 64;  // per-branch feature width f
  std::size_t knn = 32;
  std::size_t resample = 7000;
  std::size_t edge_out = 256;  // post-resample edge conv output width

  std::size_t concat_width() const { return 3 * embed_dim; }
};

struct GfeOutput {
  std::vector<std::size_t> indices;  // resampled cloud indices, FPS order
  Var features;                      // resample x edge_out
  const SceneGraph* graph = nullptr; // rebuilt on the resampled subset
};

inline void gfe_init(ParameterStore& store, const GfeConfig& cfg, Rng& rng) {
  for (std::size_t q = 0; q < cfg.hops; ++q)
    mlp_init(store, "gfe/hop" + std::to_string(q), {3, cfg.embed_dim}, rng);
  mlp_init(store, "gfe/att", {cfg.hops, cfg.hops, cfg.hops}, rng);
  mlp_init(store, "gfe/gate", {cfg.embed_dim, 1}, rng);
  mlp_init(store, "gfe/feat", {cfg.embed_dim, cfg.embed_dim}, rng);
  mlp_init(store, "gfe/pos", {3, cfg.embed_dim, cfg.embed_dim}, rng);
  edgeconv_init(store, "gfe/edge", cfg.concat_width(), cfg.edge_out, rng);
}

/// Per-hop embeddings H_q = relu(affine_q(A_q X)) from the cached adjacency powers.
inline std::vector<Var> hop_features(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                     const SceneGraph& graph, Var coords, const GfeConfig& cfg) {
  if (graph.hop_powers.size() < cfg.hops)
    throw std::invalid_argument("hop_features: graph caches " +
                                std::to_string(graph.hop_powers.size()) + " adjacency powers, " +
                                std::to_string(cfg.hops) + " required");
  std::vector<Var> out;
  out.reserve(cfg.hops);
  for (std::size_t q = 0; q < cfg.hops; ++q) {
    Var propagated = tape.spmm(graph.hop_powers[q], coords);
    Var emb = mlp_apply(tape, binder, store, "gfe/hop" + std::to_string(q), propagated,
                        {3, cfg.embed_dim});
    out.push_back(tape.relu(emb));
  }
  return out;
}

/// Fuses the hop features: per node, max- and mean-pool each hop over the feature
/// axis, pass both summaries through the shared map, sum, softmax over hops, and
/// take the hop-weighted sum of the features.
inline Var hop_attention(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                         const std::vector<Var>& hops, const GfeConfig& cfg) {
  if (hops.size() != cfg.hops)
    throw std::invalid_argument("hop_attention: got " + std::to_string(hops.size()) +
                                " hop matrices, attention map expects " +
                                std::to_string(cfg.hops));
  std::vector<Var> maxed, meaned;
  for (Var h : hops) {
    maxed.push_back(tape.max_over_cols(h));
    meaned.push_back(tape.mean_over_cols(h));
  }
  Var pooled_max = tape.concat_cols(maxed);    // n x p
  Var pooled_mean = tape.concat_cols(meaned);  // n x p
  const std::vector<std::size_t> widths = {cfg.hops, cfg.hops, cfg.hops};
  Var scores = tape.add(mlp_apply(tape, binder, store, "gfe/att", pooled_max, widths),
                        mlp_apply(tape, binder, store, "gfe/att", pooled_mean, widths));
  Var weights = tape.softmax(scores, 1);
  Var local;
  for (std::size_t q = 0; q < cfg.hops; ++q) {
    Var term = tape.scale_rows(hops[q], tape.gather_cols(weights, {q}));
    local = q == 0 ? term : tape.add(local, term);
  }
  return local;
}

/// Attention pooling over nodes: softmax of a scalar gate weights a per-node
/// feature map; returns the 1 x f weighted sum.
inline Var global_pool(Tape& tape, ParamBinder& binder, const ParameterStore& store, Var local,
                       const GfeConfig& cfg) {
  Var gate_logits = mlp_apply(tape, binder, store, "gfe/gate", local, {cfg.embed_dim, 1});
  Var gate = tape.softmax(gate_logits, 0);
  Var mapped = mlp_apply(tape, binder, store, "gfe/feat", local, {cfg.embed_dim, cfg.embed_dim});
  return tape.sum_over_rows(tape.scale_rows(mapped, gate));
}

/// Two-layer coordinate encoder.
inline Var position_encode(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                           Var coords, const GfeConfig& cfg) {
  return mlp_apply(tape, binder, store, "gfe/pos", coords, {3, cfg.embed_dim, cfg.embed_dim});
}

inline Tensor coords_tensor(const std::vector<Vec3>& pts) {
  Tensor t = Tensor::zeros({pts.size(), 3});
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) t.values[i * 3 + c] = pts[i][c];
  return t;
}

/// Graph containers for one forward pass. Ops hold pointers into the deque, so
/// growth must never relocate earlier graphs; the tape additionally references
/// the adjacency powers, so the context must outlive the tape.
struct GraphArena {
  std::deque<SceneGraph> graphs;

  SceneGraph& add(SceneGraph g) {
    graphs.push_back(std::move(g));
    return graphs.back();
  }
};

/// Full embedding pass: KNN graph on the cloud, hop propagation + attention,
/// global pooling, position encoding, concatenation to width 3f, FPS resample,
/// graph rebuild, and the widening edge conv. The full-cloud graph and the
/// rebuilt graph may be supplied precomputed (they depend only on the cloud).
inline GfeOutput gfe_forward(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                             const PointCloud& cloud, const GfeConfig& cfg, GraphArena& arena,
                             const SceneGraph* full_graph = nullptr,
                             const std::vector<std::size_t>* resample_indices = nullptr,
                             const SceneGraph* resampled_graph = nullptr) {
  if (cloud.size() < cfg.resample)
    throw std::invalid_argument("gfe_forward: cloud has " + std::to_string(cloud.size()) +
                                " points, resample size is " + std::to_string(cfg.resample));
  if (full_graph == nullptr) {
    SceneGraph g = knn_graph(cloud.points, cfg.knn);
    normalized_adjacency_powers(g, cfg.hops);
    full_graph = &arena.add(std::move(g));
  }
  Var coords = tape.constant(coords_tensor(cloud.points));
  std::vector<Var> hops = hop_features(tape, binder, store, *full_graph, coords, cfg);
  Var local = hop_attention(tape, binder, store, hops, cfg);
  Var global = global_pool(tape, binder, store, local, cfg);
  Var pos = position_encode(tape, binder, store, coords, cfg);
  Var concat =
      tape.concat_cols({local, tape.broadcast_row(global, cloud.size()), pos});  // n x 3f

  GfeOutput out;
  out.indices = resample_indices != nullptr
                    ? *resample_indices
                    : farthest_point_sampling(cloud.points, cfg.resample, 0);
  if (resampled_graph == nullptr) {
    std::vector<Vec3> sub;
    sub.reserve(out.indices.size());
    for (auto i : out.indices) sub.push_back(cloud.points[i]);
    resampled_graph = &arena.add(knn_graph(sub, cfg.knn, out.indices));
  }
  out.graph = resampled_graph;
  Var gathered = tape.gather_rows(concat, out.indices);
  out.features = edgeconv(tape, binder, store, "gfe/edge", *resampled_graph, gathered,
                          cfg.concat_width(), cfg.edge_out);
  return out;
}

}  // namespace granet
