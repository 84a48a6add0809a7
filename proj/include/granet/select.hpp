#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "granet/edgeconv.hpp"
#include "granet/embed.hpp"
#include "granet/grasp_types.hpp"
#include "granet/log.hpp"

namespace granet {

/// One selection level: classification logits over the stage input, the chosen
/// node subset, and the graph/features rebuilt on it.
struct SelectionStage {
  Var logits;                          // per input node
  std::vector<std::size_t> local;      // positions within the stage input
  std::vector<std::size_t> selected;   // original cloud indices
  const SceneGraph* graph = nullptr;   // rebuilt on the selection
  Var features;
  bool shortfall = false;  // fewer candidates than requested; all were taken
};

inline void gps_init(ParameterStore& store, std::size_t feature_dim, std::size_t dov_levels,
                     Rng& rng) {
  mlp_init(store, "gps/obj", {feature_dim, 128, 64, 16, 2}, rng);
  edgeconv_init(store, "gps/edge", feature_dim, feature_dim, rng);
  mlp_init(store, "gps/val", {feature_dim, 64, 32, dov_levels}, rng);
}

/// KNN rebuild helper for selection stages: k is clamped to node count - 1 when a
/// small selection cannot support the configured k.
inline SceneGraph selection_graph(const std::vector<Vec3>& pts,
                                  std::vector<std::size_t> cloud_indices, std::size_t k) {
  const std::size_t usable_k = std::min(k, pts.size() - 1);
  return knn_graph(pts, usable_k, std::move(cloud_indices));
}

/// Object point selection: binary object/background logits per node, argmax mask
/// (ties fall to background), FPS over the masked-in nodes, graph rebuild, and
/// feature gather.
inline SelectionStage ops_select(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                 const GfeOutput& gfe, std::size_t n_obj, std::size_t knn_k,
                                 GraphArena& arena,
                                 const std::vector<std::size_t>* forced_local = nullptr) {
  SelectionStage stage;
  const std::size_t n = gfe.indices.size();
  stage.logits = mlp_apply(tape, binder, store, "gps/obj", gfe.features,
                           {tape.val(gfe.features).cols(), 128, 64, 16, 2});
  if (forced_local != nullptr) {
    stage.local = *forced_local;
  } else {
    const Tensor& logits = tape.val(stage.logits);
    std::vector<std::size_t> object_nodes;
    for (std::size_t i = 0; i < n; ++i)
      if (logits.at(i, 1) > logits.at(i, 0)) object_nodes.push_back(i);
    if (object_nodes.empty()) throw std::runtime_error("ops_select: no object points predicted");
    if (object_nodes.size() < 2)
      throw std::runtime_error("ops_select: a single predicted object point cannot form a graph");
    if (object_nodes.size() < n_obj) {
      log_info("ops_select: only " + std::to_string(object_nodes.size()) +
               " predicted object points for n_obj=" + std::to_string(n_obj) + ", taking all");
      stage.shortfall = true;
      stage.local = object_nodes;
    } else {
      std::vector<Vec3> masked;
      masked.reserve(object_nodes.size());
      for (auto i : object_nodes) masked.push_back(gfe.graph->coords[i]);
      for (auto pick : farthest_point_sampling(masked, n_obj, 0))
        stage.local.push_back(object_nodes[pick]);
    }
  }
  std::vector<Vec3> pts;
  pts.reserve(stage.local.size());
  for (auto i : stage.local) {
    pts.push_back(gfe.graph->coords[i]);
    stage.selected.push_back(gfe.indices[i]);
  }
  stage.graph = &arena.add(selection_graph(pts, stage.selected, knn_k));
  stage.features = tape.gather_rows(gfe.features, stage.local);
  return stage;
}

/// Mean annotated score and its quantized level per queried point.
struct DovLabels {
  std::vector<double> mean_score;  // 0 where unannotated
  std::vector<std::size_t> level;  // in [0, M)
  std::vector<char> annotated;
  std::size_t levels = 0;
};

/// Quantizes per-point mean grasp scores into M levels over the scene's observed
/// score range. Unannotated points get level 0; a zero-width range maps every
/// annotated point to the top level.
inline DovLabels compute_dov_labels(const GraspAnnotationSet& annotations,
                                    const std::vector<std::size_t>& point_indices,
                                    std::size_t m_levels) {
  if (m_levels < 2) throw std::invalid_argument("compute_dov_labels: M must be >= 2");
  DovLabels out;
  out.levels = m_levels;
  const std::size_t n = point_indices.size();
  out.mean_score.assign(n, 0.0);
  out.level.assign(n, 0);
  out.annotated.assign(n, 0);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = annotations.per_point.find(point_indices[i]);
    if (it == annotations.per_point.end() || it->second.empty()) continue;
    double s = 0.0;
    for (const GraspAnnotation& g : it->second) s += g.score;
    s /= static_cast<double>(it->second.size());
    out.mean_score[i] = s;
    out.annotated[i] = 1;
    lo = any ? std::min(lo, s) : s;
    hi = any ? std::max(hi, s) : s;
    any = true;
  }
  if (!any) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.annotated[i]) continue;
    if (range == 0.0) {
      out.level[i] = m_levels - 1;
      continue;
    }
    const double raw =
        std::floor((out.mean_score[i] - lo) / range * static_cast<double>(m_levels));
    out.level[i] = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, raw)),
                                         m_levels - 1);
  }
  return out;
}

/// Valuable point selection: residual edge conv refine, M-level logits, ranking
/// by expected level under the softmax, top n_val (ties to the lower original
/// cloud index), and a final graph rebuild.
inline SelectionStage vps_select(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                 const SelectionStage& ops, std::size_t n_val,
                                 std::size_t dov_levels, std::size_t knn_k, GraphArena& arena,
                                 const std::vector<std::size_t>* forced_local = nullptr) {
  SelectionStage stage;
  const std::size_t width = tape.val(ops.features).cols();
  Var refined =
      edgeconv_residual(tape, binder, store, "gps/edge", *ops.graph, ops.features, width);
  stage.logits = mlp_apply(tape, binder, store, "gps/val", refined, {width, 64, 32, dov_levels});
  if (forced_local != nullptr) {
    stage.local = *forced_local;
    std::vector<Vec3> fpts;
    fpts.reserve(stage.local.size());
    for (auto i : stage.local) {
      fpts.push_back(ops.graph->coords[i]);
      stage.selected.push_back(ops.selected[i]);
    }
    stage.graph = &arena.add(selection_graph(fpts, stage.selected, knn_k));
    stage.features = tape.gather_rows(refined, stage.local);
    return stage;
  }
  const Tensor& logits = tape.val(stage.logits);
  const std::size_t n = logits.rows();

  std::vector<double> expected(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t m = 1; m < dov_levels; ++m) mx = std::max(mx, logits.at(i, m));
    double z = 0.0, acc = 0.0;
    for (std::size_t m = 0; m < dov_levels; ++m) {
      const double p = std::exp(logits.at(i, m) - mx);
      z += p;
      acc += p * static_cast<double>(m);
    }
    expected[i] = acc / z;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (expected[a] != expected[b]) return expected[a] > expected[b];
    return ops.selected[a] < ops.selected[b];
  });
  std::size_t take = n_val;
  if (n < n_val) {
    log_info("vps_select: only " + std::to_string(n) + " candidate points for n_val=" +
             std::to_string(n_val) + ", taking all");
    stage.shortfall = true;
    take = n;
  }
  stage.local.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::vector<Vec3> pts;
  pts.reserve(take);
  for (auto i : stage.local) {
    pts.push_back(ops.graph->coords[i]);
    stage.selected.push_back(ops.selected[i]);
  }
  stage.graph = &arena.add(selection_graph(pts, stage.selected, knn_k));
  stage.features = tape.gather_rows(refined, stage.local);
  return stage;
}

}  // namespace granet
