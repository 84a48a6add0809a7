#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "granet/grasp_types.hpp"
#include "granet/nn.hpp"
#include "granet/tape.hpp"

namespace granet {

struct GpgConfig {
  std::size_t views = 300;
  std::size_t angle_bins = 12;  // in-plane rotation over [0, pi)
  std::vector<double> depth_bins = {0.01, 0.02, 0.03, 0.04};
  double w_max = 0.1;
  double crop_radius = 0.05;
  double crop_depth_lo = -0.02;
  double crop_depth_hi = 0.04;
  std::size_t crop_points = 64;

  std::size_t grid_size() const { return angle_bins * depth_bins.size(); }
  double bin_center_angle(std::size_t a) const {
    return (static_cast<double>(a) + 0.5) * std::numbers::pi / static_cast<double>(angle_bins);
  }
};

inline void gpg_init(ParameterStore& store, std::size_t feature_dim, const GpgConfig& cfg,
                     Rng& rng) {
  mlp_init(store, "gpg/view", {feature_dim, 128, cfg.views}, rng);
  mlp_init(store, "gpg/enc", {3, 64, 128}, rng);
  mlp_init(store, "gpg/head", {128, cfg.grid_size() * 2}, rng);
}

/// Per-point view logits over the lattice plus the argmax choice (ties to the
/// lower view index).
struct ViewPrediction {
  Var logits;  // n x V
  std::vector<std::size_t> chosen;
};

inline ViewPrediction predict_view(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                                   Var features, const GpgConfig& cfg) {
  ViewPrediction out;
  const std::size_t width = tape.val(features).cols();
  out.logits = mlp_apply(tape, binder, store, "gpg/view", features, {width, 128, cfg.views});
  const Tensor& l = tape.val(out.logits);
  out.chosen.resize(l.rows());
  for (std::size_t i = 0; i < l.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < cfg.views; ++v)
      if (l.at(i, v) > l.at(i, best)) best = v;
    out.chosen[i] = best;
  }
  return out;
}

/// Per-(angle, depth) grids decoded from the stacked cylinder crops: raw scores
/// (unbounded) and widths squashed onto [0, w_max].
struct GraspGrids {
  Var scores;  // n x (A*D), row-major over (angle, depth)
  Var widths;  // n x (A*D), in [0, w_max]
};

/// Shared per-point encoder + max pool per crop + affine head. `crops` holds n
/// stacked crops of exactly crop_points rows each (pad before stacking).
inline GraspGrids grasp_head(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                             const Tensor& crops, std::size_t n_crops, const GpgConfig& cfg) {
  if (crops.rows() != n_crops * cfg.crop_points || crops.cols() != 3)
    throw std::invalid_argument("grasp_head: expected " +
                                std::to_string(n_crops * cfg.crop_points) + "x3 stacked crops, got " +
                                crops.shape_str());
  std::vector<std::size_t> segment(crops.rows());
  for (std::size_t i = 0; i < crops.rows(); ++i) segment[i] = i / cfg.crop_points;
  Var per_point = mlp_apply(tape, binder, store, "gpg/enc", tape.constant(crops), {3, 64, 128});
  Var pooled = tape.segment_max(tape.relu(per_point), segment, n_crops,
                                tape.constant(Tensor::zeros({n_crops, 128})));
  const std::size_t g = cfg.grid_size();
  Var raw = mlp_apply(tape, binder, store, "gpg/head", pooled, {128, g * 2});
  std::vector<std::size_t> score_cols(g), width_cols(g);
  for (std::size_t i = 0; i < g; ++i) {
    score_cols[i] = i;
    width_cols[i] = g + i;
  }
  GraspGrids grids;
  grids.scores = tape.gather_cols(raw, score_cols);
  grids.widths = tape.scale(tape.sigmoid(tape.gather_cols(raw, width_cols)), cfg.w_max);
  return grids;
}

/// Assembles one grasp per selected point from the best grid cell: rotation from
/// the chosen view and the bin-center in-plane angle, translation = point +
/// depth * view. Sorted by score descending, ties stable by point order.
inline std::vector<GraspPose> decode_grasps(const std::vector<Vec3>& points,
                                            const std::vector<std::size_t>& chosen_views,
                                            const ViewLattice& lattice, const Tensor& score_grid,
                                            const Tensor& width_grid, const GpgConfig& cfg) {
  const std::size_t n = points.size();
  if (chosen_views.size() != n || score_grid.rows() != n || width_grid.rows() != n)
    throw std::invalid_argument("decode_grasps: input row mismatch");
  const std::size_t d_bins = cfg.depth_bins.size();
  std::vector<GraspPose> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cfg.grid_size(); ++c)
      if (score_grid.at(i, c) > score_grid.at(i, best)) best = c;
    const std::size_t a = best / d_bins, d = best % d_bins;
    const Vec3 view = lattice.views[chosen_views[i]];
    GraspPose g;
    g.R = assemble_rotation(view, cfg.bin_center_angle(a));
    g.depth = cfg.depth_bins[d];
    g.T = points[i] + g.depth * view;
    g.width = width_grid.at(i, best);
    g.score = score_grid.at(i, best);
    out.push_back(g);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const GraspPose& x, const GraspPose& y) { return x.score > y.score; });
  return out;
}

}  // namespace granet
