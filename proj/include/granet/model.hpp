#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "granet/embed.hpp"
#include "granet/grasp.hpp"
#include "granet/select.hpp"

namespace granet {

enum class SelectionMode { granet, fps_baseline };

struct ModelConfig {
  GfeConfig gfe;
  GpgConfig gpg;
  std::size_t n_obj = 2048;
  std::size_t n_val = 512;
  std::size_t dov_levels = 10;
  SelectionMode mode = SelectionMode::granet;
};

inline void model_init(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  gfe_init(store, cfg.gfe, rng);
  gps_init(store, cfg.gfe.edge_out, cfg.dov_levels, rng);
  gpg_init(store, cfg.gfe.edge_out, cfg.gpg, rng);
}

/// Parameter-independent per-scene precomputation, reusable across passes. Must
/// outlive any tape built on it (the pass references the adjacency powers).
struct SceneContext {
  SceneGraph full;                    // input-cloud graph with cached hop powers
  std::vector<std::size_t> resample;  // farthest-point indices into the cloud
  SceneGraph resampled;
};

inline SceneContext build_scene_context(const PointCloud& cloud, const GfeConfig& cfg) {
  SceneContext ctx;
  ctx.full = knn_graph(cloud.points, cfg.knn);
  normalized_adjacency_powers(ctx.full, cfg.hops);
  ctx.resample = farthest_point_sampling(cloud.points, cfg.resample, 0);
  std::vector<Vec3> sub;
  sub.reserve(ctx.resample.size());
  for (auto i : ctx.resample) sub.push_back(cloud.points[i]);
  ctx.resampled = knn_graph(sub, cfg.knn, ctx.resample);
  return ctx;
}

/// Frozen selections for finite-difference checks (the data-dependent index
/// choices are held fixed while parameters move).
struct SelectionOverrides {
  const std::vector<std::size_t>* ops_local = nullptr;  // positions in the resampled graph
  const std::vector<std::size_t>* vps_local = nullptr;  // positions in the object-stage graph
};

/// Embedding + point selection + per-point view logits; everything up to (but
/// not including) the cylinder crops.
struct SelectResult {
  GfeOutput embed;
  SelectionStage ops;  // unset in fps-baseline mode
  SelectionStage vps;  // final point selection
  bool learned_selection = true;
  ViewPrediction view;       // logits + argmax over the final points
  std::vector<Vec3> points;  // world positions of the final points
};

inline SelectResult select_forward(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                   const PointCloud& cloud, const ModelConfig& cfg,
                                   GraphArena& arena, const SceneContext* ctx = nullptr,
                                   const SelectionOverrides* ov = nullptr) {
  SelectResult out;
  out.embed = gfe_forward(tape, binder, store, cloud, cfg.gfe, arena,
                          ctx != nullptr ? &ctx->full : nullptr,
                          ctx != nullptr ? &ctx->resample : nullptr,
                          ctx != nullptr ? &ctx->resampled : nullptr);
  if (cfg.mode == SelectionMode::granet) {
    out.ops = ops_select(tape, binder, store, out.embed, cfg.n_obj, cfg.gfe.knn, arena,
                         ov != nullptr ? ov->ops_local : nullptr);
    out.vps = vps_select(tape, binder, store, out.ops, cfg.n_val, cfg.dov_levels, cfg.gfe.knn,
                         arena, ov != nullptr ? ov->vps_local : nullptr);
  } else {
    out.learned_selection = false;
    SelectionStage stage;
    const std::vector<Vec3>& coords = out.embed.graph->coords;
    const std::size_t take = std::min(cfg.n_val, coords.size());
    stage.local = farthest_point_sampling(coords, take, 0);
    std::vector<Vec3> pts;
    pts.reserve(take);
    for (auto i : stage.local) {
      pts.push_back(coords[i]);
      stage.selected.push_back(out.embed.indices[i]);
    }
    stage.shortfall = take < cfg.n_val;
    stage.graph = &arena.add(selection_graph(pts, stage.selected, cfg.gfe.knn));
    stage.features = tape.gather_rows(out.embed.features, stage.local);
    out.vps = stage;
  }
  out.points = out.vps.graph->coords;
  out.view = predict_view(tape, binder, store, out.vps.features, cfg.gpg);
  return out;
}

/// Marker inside a crop-view list: use the predicted view for this point.
inline constexpr std::size_t kPredictedView = static_cast<std::size_t>(-1);

/// Cylinder crops from the full cloud at the chosen views, then the grasp
/// grids. `crop_views` may override per point (kPredictedView falls back to the
/// argmax view); training passes labeled views so the grids are supervised on
/// the crop they will be decoded from.
struct GraspForward {
  std::vector<std::size_t> crop_views;  // lattice id actually used per crop
  std::vector<char> crop_empty;
  GraspGrids grids;
};

inline GraspForward grasp_forward(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                  const PointCloud& cloud, const SelectResult& sel,
                                  const ModelConfig& cfg, const ViewLattice& lattice,
                                  const std::vector<std::size_t>* crop_views = nullptr) {
  if (lattice.size() != cfg.gpg.views)
    throw std::invalid_argument("grasp_forward: lattice has " + std::to_string(lattice.size()) +
                                " views, config expects " + std::to_string(cfg.gpg.views));
  const std::size_t n = sel.points.size();
  GraspForward out;
  out.crop_views = sel.view.chosen;
  if (crop_views != nullptr) {
    if (crop_views->size() != n)
      throw std::invalid_argument("grasp_forward: crop view override covers " +
                                  std::to_string(crop_views->size()) + " points, pass has " +
                                  std::to_string(n));
    for (std::size_t i = 0; i < n; ++i)
      if ((*crop_views)[i] != kPredictedView) out.crop_views[i] = (*crop_views)[i];
  }
  for (std::size_t v : out.crop_views)
    if (v >= lattice.size())
      throw std::invalid_argument("grasp_forward: view id " + std::to_string(v) +
                                  " outside lattice of " + std::to_string(lattice.size()));

  Tensor crops = Tensor::zeros({n * cfg.gpg.crop_points, 3});
  out.crop_empty.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const CylinderCrop crop =
        cylinder_crop(cloud.points, sel.points[i], lattice.views[out.crop_views[i]],
                      cfg.gpg.crop_radius, cfg.gpg.crop_depth_lo, cfg.gpg.crop_depth_hi,
                      cfg.gpg.crop_points);
    out.crop_empty[i] = crop.empty ? 1 : 0;
    if (crop.empty) continue;  // zero rows stand in for the absent geometry
    for (std::size_t r = 0; r < cfg.gpg.crop_points; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        crops.values[(i * cfg.gpg.crop_points + r) * 3 + c] = crop.points[r][c];
  }
  out.grids = grasp_head(tape, binder, store, crops, n, cfg.gpg);
  return out;
}

struct ForwardResult {
  SelectResult sel;
  GraspForward grasp;
};

/// End-to-end inference pass: selection phase plus crops at the predicted views.
inline ForwardResult granet_forward(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                    const PointCloud& cloud, const ModelConfig& cfg,
                                    const ViewLattice& lattice, GraphArena& arena,
                                    const SceneContext* ctx = nullptr,
                                    const SelectionOverrides* ov = nullptr) {
  ForwardResult out;
  out.sel = select_forward(tape, binder, store, cloud, cfg, arena, ctx, ov);
  out.grasp = grasp_forward(tape, binder, store, cloud, out.sel, cfg, lattice);
  return out;
}

inline std::vector<GraspPose> decode_result(Tape& tape, const ForwardResult& fwd,
                                            const ViewLattice& lattice, const GpgConfig& cfg) {
  return decode_grasps(fwd.sel.points, fwd.grasp.crop_views, lattice,
                       tape.val(fwd.grasp.grids.scores), tape.val(fwd.grasp.grids.widths), cfg);
}

}  // namespace granet
