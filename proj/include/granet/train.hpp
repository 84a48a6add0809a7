#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "granet/log.hpp"
#include "granet/supervise.hpp"

namespace granet {

struct TrainScene {
  std::string name;
  PointCloud cloud;
  GraspAnnotationSet annotations;
};

struct SceneReport {
  LossBreakdown loss;
  double total = 0.0;
  double ops_accuracy = 0.0;
  double vps_within_one = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double selection = 0.0;
  double view = 0.0;
  double cell = 0.0;
  double score = 0.0;
  double width = 0.0;
  double ops_accuracy = 0.0;
  double vps_within_one = 0.0;
  double matched = 0.0;    // mean matched points per scene
  std::size_t steps = 0;   // optimizer steps taken this epoch
};

/// Owns the scene set, per-scene graph caches, and the optimizer state. One
/// pass per scene per epoch, gradients accumulated over batch_size scenes.
class Trainer {
 public:
  Trainer(ModelConfig mcfg, TrainConfig tcfg, const ViewLattice& lattice)
      : mcfg_(std::move(mcfg)), tcfg_(tcfg), lattice_(lattice), opt_(AdamConfig{tcfg.lr}) {}

  void add_scene(TrainScene scene) {
    scenes_.push_back(std::move(scene));
    contexts_.emplace_back();
  }

  std::size_t scene_count() const { return scenes_.size(); }
  std::size_t steps() const { return steps_; }
  const TrainScene& scene(std::size_t idx) const { return scenes_[idx]; }
  const ModelConfig& model_config() const { return mcfg_; }

  /// Forward + loss on one scene; accumulates parameter gradients when given a
  /// map. Falls back to a label-guided object selection if the predicted mask
  /// degenerates (selection supervision still flows through the logits).
  SceneReport scene_pass(const ParameterStore& store, std::size_t idx, GradientMap* grads) {
    const TrainScene& sc = scenes_[idx];
    const Context& cx = context(idx);
    SceneReport rep;
    const auto run = [&](const SelectionOverrides* ov) {
      Tape tape;
      ParamBinder binder(tape, store);
      GraphArena arena;
      SelectResult sel = select_forward(tape, binder, store, sc.cloud, mcfg_, arena, &cx.graphs, ov);
      const std::vector<MatchedTarget> targets = match_ground_truth(
          sel.points, sc.cloud, sc.annotations, lattice_, mcfg_.gpg, tcfg_.match_radius);
      const std::vector<std::size_t> crop_views = crop_views_from_targets(targets);
      GraspForward grasp =
          grasp_forward(tape, binder, store, sc.cloud, sel, mcfg_, lattice_, &crop_views);
      const DovLabels dov =
          compute_dov_labels(sc.annotations, sel.ops.selected, mcfg_.dov_levels);
      LossBreakdown lb = total_loss(tape, sel, grasp, cx.mask, dov, targets, tcfg_);
      const double total = tape.val(lb.total).values[0];
      if (!std::isfinite(total))
        throw std::runtime_error("train: non-finite loss at scene " + sc.name + ", step " +
                                 std::to_string(steps_));
      if (grads != nullptr) {
        tape.backward(lb.total);
        binder.harvest(*grads);
      }
      rep.loss = lb;
      rep.total = total;
      rep.ops_accuracy = argmax_accuracy(tape.val(sel.ops.logits), cx.mask);
      rep.vps_within_one = within_one_accuracy(tape.val(sel.vps.logits), dov.level);
    };
    try {
      run(nullptr);
    } catch (const std::runtime_error& e) {
      if (std::strncmp(e.what(), "ops_select:", 11) != 0) throw;
      log_info("train: scene " + sc.name + ": " + e.what() + "; using labeled object points");
      const std::vector<std::size_t> forced = labeled_object_selection(cx);
      SelectionOverrides ov;
      ov.ops_local = &forced;
      run(&ov);
    }
    return rep;
  }

  /// One seeded-shuffled pass over the scenes. step_cap (when nonzero) bounds
  /// the total optimizer steps taken so far, stopping the epoch early.
  EpochMetrics run_epoch(ParameterStore& store, std::size_t epoch_1based,
                         std::size_t step_cap = 0) {
    if (scenes_.empty()) throw std::invalid_argument("train: no scenes");
    opt_.set_lr(tcfg_.lr_for_epoch(epoch_1based));
    std::vector<std::size_t> order(scenes_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(tcfg_.seed, epoch_1based));
    rng.shuffle(order);

    EpochMetrics m;
    m.epoch = epoch_1based;
    m.lr = opt_.lr();
    GradientMap grads;
    std::vector<std::pair<std::size_t, GradientMap>> batch;  // (scene idx, its grads)
    std::size_t done = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (step_cap != 0 && steps_ >= step_cap) break;
      GradientMap scene_grads;
      SceneReport r = scene_pass(store, order[pos], &scene_grads);
      m.loss += r.total;
      m.selection += r.loss.selection;
      m.view += r.loss.view;
      m.cell += r.loss.cell;
      m.score += r.loss.score;
      m.width += r.loss.width;
      m.ops_accuracy += r.ops_accuracy;
      m.vps_within_one += r.vps_within_one;
      m.matched += static_cast<double>(r.loss.matched);
      ++done;
      batch.emplace_back(order[pos], std::move(scene_grads));
      if (batch.size() == tcfg_.batch_size || pos + 1 == order.size()) {
        // Mean over the batch, reduced in ascending scene order so the update
        // does not depend on the shuffle.
        std::sort(batch.begin(), batch.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        zero_grads(store, grads);
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (const auto& [idx, sg] : batch)
          for (const auto& [name, g] : sg) {
            auto& dst = grads[name];
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += inv * g[i];
          }
        opt_.step(store, grads);
        ++steps_;
        ++m.steps;
        batch.clear();
      }
    }
    if (done > 0) {
      const double inv = 1.0 / static_cast<double>(done);
      m.loss *= inv;
      m.selection *= inv;
      m.view *= inv;
      m.cell *= inv;
      m.score *= inv;
      m.width *= inv;
      m.ops_accuracy *= inv;
      m.vps_within_one *= inv;
      m.matched *= inv;
    }
    return m;
  }

  /// Mean OPS / VPS-within-one accuracy over all scenes with frozen weights.
  std::pair<double, double> measure(const ParameterStore& store) {
    double ops = 0.0, vps = 0.0;
    for (std::size_t i = 0; i < scenes_.size(); ++i) {
      SceneReport r = scene_pass(store, i, nullptr);
      ops += r.ops_accuracy;
      vps += r.vps_within_one;
    }
    const double inv = scenes_.empty() ? 0.0 : 1.0 / static_cast<double>(scenes_.size());
    return {ops * inv, vps * inv};
  }

 private:
  struct Context {
    bool built = false;
    SceneContext graphs;
    std::vector<std::size_t> mask;
  };

  const Context& context(std::size_t idx) {
    Context& cx = contexts_[idx];
    if (!cx.built) {
      cx.graphs = build_scene_context(scenes_[idx].cloud, mcfg_.gfe);
      cx.mask = object_point_labels(scenes_[idx].cloud, cx.graphs.resample);
      cx.built = true;
    }
    return cx;
  }

  std::vector<std::size_t> labeled_object_selection(const Context& cx) const {
    std::vector<std::size_t> object_nodes;
    for (std::size_t i = 0; i < cx.mask.size(); ++i)
      if (cx.mask[i] == 1) object_nodes.push_back(i);
    if (object_nodes.size() < 2)
      throw std::runtime_error("train: scene has fewer than 2 labeled object points in resample");
    if (object_nodes.size() <= mcfg_.n_obj) return object_nodes;
    std::vector<Vec3> coords;
    coords.reserve(object_nodes.size());
    for (auto i : object_nodes) coords.push_back(cx.graphs.resampled.coords[i]);
    std::vector<std::size_t> picked;
    picked.reserve(mcfg_.n_obj);
    for (auto pick : farthest_point_sampling(coords, mcfg_.n_obj, 0))
      picked.push_back(object_nodes[pick]);
    return picked;
  }

  void zero_grads(const ParameterStore& store, GradientMap& grads) const {
    for (const auto& [name, t] : store) grads[name].assign(t.size(), 0.0);
  }

  ModelConfig mcfg_;
  TrainConfig tcfg_;
  const ViewLattice& lattice_;
  AdamOptimizer opt_;
  std::vector<TrainScene> scenes_;
  std::vector<Context> contexts_;
  std::size_t steps_ = 0;
};

struct OverfitReport {
  bool reached = false;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  double ops_accuracy = 0.0;
  double vps_within_one = 0.0;
};

/// Trains until both accuracy targets hold on the training scenes (measured
/// with frozen weights) or max_steps optimizer steps have been taken.
inline OverfitReport overfit(Trainer& trainer, ParameterStore& store, double ops_target,
                             double vps_target, std::size_t max_steps,
                             std::size_t confirm_every_epochs = 5) {
  OverfitReport rep;
  std::size_t epoch = 0;
  while (trainer.steps() < max_steps) {
    ++epoch;
    EpochMetrics m = trainer.run_epoch(store, epoch, max_steps);
    const bool promising =
        m.ops_accuracy >= ops_target - 0.01 && m.vps_within_one >= vps_target - 0.01;
    if (promising || epoch % confirm_every_epochs == 0) {
      auto [ops, vps] = trainer.measure(store);
      rep.ops_accuracy = ops;
      rep.vps_within_one = vps;
      if (ops >= ops_target && vps >= vps_target) {
        rep.reached = true;
        break;
      }
    }
  }
  if (!rep.reached) {
    auto [ops, vps] = trainer.measure(store);
    rep.ops_accuracy = ops;
    rep.vps_within_one = vps;
    rep.reached = ops >= ops_target && vps >= vps_target;
  }
  rep.steps = trainer.steps();
  rep.epochs = epoch;
  return rep;
}

}  // namespace granet
