#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "granet/annotate.hpp"
#include "granet/model.hpp"

namespace granet {

struct TrainConfig {
  double lambda1 = 0.5;  // point-selection term
  double lambda2 = 0.3;  // view term
  double lambda3 = 0.2;  // score/rotation/width terms
  std::size_t epochs = 10;
  std::size_t batch_size = 2;
  double lr = 1e-3;
  double lr_late = 5e-4;
  std::size_t lr_switch_epoch = 8;  // 1-based; later epochs use lr_late
  std::uint64_t seed = 0;
  double smooth_l1_beta = 1.0;
  double match_radius = 0.005;

  double lr_for_epoch(std::size_t epoch_1based) const {
    return epoch_1based <= lr_switch_epoch ? lr : lr_late;
  }
};

/// Supervision for one selected point, from the nearest annotated point's
/// best-scoring grasp.
struct MatchedTarget {
  bool matched = false;
  std::size_t view_label = 0;
  std::size_t cell_label = 0;  // angle_bin * depth_count + depth_index
  double width_target = 0.0;
  double score_target = 0.0;
};

/// Per selected point, pairs it with the nearest annotated cloud point within
/// match_radius and derives labels from that point's best-scoring annotation
/// (ties keep the earliest stored grasp).
inline std::vector<MatchedTarget> match_ground_truth(const std::vector<Vec3>& points,
                                                     const PointCloud& cloud,
                                                     const GraspAnnotationSet& annotations,
                                                     const ViewLattice& lattice,
                                                     const GpgConfig& gpg,
                                                     double match_radius = 0.005) {
  std::vector<MatchedTarget> out(points.size());
  const double r2 = match_radius * match_radius;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best_d = r2;
    const std::vector<GraspAnnotation>* best_list = nullptr;
    for (const auto& [idx, list] : annotations.per_point) {
      if (list.empty()) continue;
      const double d = sq_dist(points[i], cloud.points[idx]);
      if (d <= best_d) {  // map order itself breaks exact-distance ties by index
        if (d == best_d && best_list != nullptr) continue;
        best_d = d;
        best_list = &list;
      }
    }
    if (best_list == nullptr) continue;
    const GraspAnnotation* best = &(*best_list)[0];
    for (const GraspAnnotation& g : *best_list)
      if (g.score > best->score) best = &g;

    MatchedTarget& t = out[i];
    t.matched = true;
    t.view_label = lattice.nearest(best->approach);
    const auto a = std::min<std::size_t>(
        gpg.angle_bins - 1,
        static_cast<std::size_t>(std::floor(best->angle * static_cast<double>(gpg.angle_bins) /
                                            std::numbers::pi)));
    std::size_t d_idx = 0;
    for (std::size_t d = 1; d < gpg.depth_bins.size(); ++d)
      if (std::abs(best->depth - gpg.depth_bins[d]) <
          std::abs(best->depth - gpg.depth_bins[d_idx]))
        d_idx = d;
    t.cell_label = a * gpg.depth_bins.size() + d_idx;
    t.width_target = best->width;
    t.score_target = best->score;
  }
  return out;
}

/// View ids for training-time crops: the labeled view where matched, the
/// predicted view elsewhere.
inline std::vector<std::size_t> crop_views_from_targets(const std::vector<MatchedTarget>& tgt) {
  std::vector<std::size_t> views(tgt.size(), kPredictedView);
  for (std::size_t i = 0; i < tgt.size(); ++i)
    if (tgt[i].matched) views[i] = tgt[i].view_label;
  return views;
}

/// Binary object/background labels over a point subset of the cloud.
inline std::vector<std::size_t> object_point_labels(const PointCloud& cloud,
                                                    const std::vector<std::size_t>& indices) {
  if (!cloud.has_labels())
    throw std::invalid_argument("object_point_labels: cloud carries no object ids");
  std::vector<std::size_t> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    labels[i] = cloud.object_id[indices[i]] > 0 ? 1 : 0;
  return labels;
}

/// Selection loss: mean binary cross-entropy of the object mask over the
/// resampled points plus mean level cross-entropy over the object selection.
inline Var gps_loss(Tape& tape, const SelectResult& sel, const std::vector<std::size_t>& mask,
                    const DovLabels& dov) {
  return tape.add(tape.cross_entropy(sel.ops.logits, mask),
                  tape.cross_entropy(sel.vps.logits, dov.level));
}

struct LossBreakdown {
  Var total;
  double selection = 0.0;
  double view = 0.0;
  double cell = 0.0;
  double score = 0.0;
  double width = 0.0;
  std::size_t matched = 0;
};

/// Weighted sum lambda1 * L_selection + lambda2 * L_view + lambda3 *
/// (L_score + L_cell + L_width). Grasp terms average over matched points only
/// and vanish when nothing matches.
inline LossBreakdown total_loss(Tape& tape, const SelectResult& sel, const GraspForward& grasp,
                                const std::vector<std::size_t>& mask, const DovLabels& dov,
                                const std::vector<MatchedTarget>& targets,
                                const TrainConfig& cfg) {
  LossBreakdown out;
  Var l_sel = gps_loss(tape, sel, mask, dov);

  std::vector<std::size_t> rows, view_labels, cell_labels, cells;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i].matched) continue;
    rows.push_back(i);
    view_labels.push_back(targets[i].view_label);
    cell_labels.push_back(targets[i].cell_label);
  }
  out.matched = rows.size();

  Var l_view, l_cell, l_score, l_width;
  if (rows.empty()) {
    l_view = tape.constant(Tensor::scalar(0.0));
    l_cell = l_view;
    l_score = l_view;
    l_width = l_view;
  } else {
    const std::size_t m = rows.size();
    Tensor score_target = Tensor::zeros({m, 1});
    Tensor width_target = Tensor::zeros({m, 1});
    for (std::size_t r = 0; r < m; ++r) {
      score_target.values[r] = targets[rows[r]].score_target;
      width_target.values[r] = targets[rows[r]].width_target;
      cells.push_back(cell_labels[r]);
    }
    l_view = tape.cross_entropy(tape.gather_rows(sel.view.logits, rows), view_labels);
    Var score_rows = tape.gather_rows(grasp.grids.scores, rows);
    l_cell = tape.cross_entropy(score_rows, cell_labels);
    l_score = tape.smooth_l1(tape.gather_cells(score_rows, cells), score_target,
                             cfg.smooth_l1_beta);
    l_width = tape.smooth_l1(
        tape.gather_cells(tape.gather_rows(grasp.grids.widths, rows), cells), width_target,
        cfg.smooth_l1_beta);
  }
  out.selection = tape.val(l_sel).values[0];
  out.view = tape.val(l_view).values[0];
  out.cell = tape.val(l_cell).values[0];
  out.score = tape.val(l_score).values[0];
  out.width = tape.val(l_width).values[0];
  out.total = tape.weighted_sum({{l_sel, cfg.lambda1},
                                 {l_view, cfg.lambda2},
                                 {l_score, cfg.lambda3},
                                 {l_cell, cfg.lambda3},
                                 {l_width, cfg.lambda3}});
  return out;
}

inline double argmax_accuracy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("argmax_accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    if (best == labels[i]) ++hits;
  }
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

/// Fraction of points whose predicted level is within one of the label.
inline double within_one_accuracy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("within_one_accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    const std::size_t lo = labels[i] > 0 ? labels[i] - 1 : 0;
    if (best >= lo && best <= labels[i] + 1) ++hits;
  }
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace granet
