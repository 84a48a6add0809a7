#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "granet/annotate.hpp"
#include "granet/model.hpp"

namespace granet {

struct NmsConfig {
  double translation_radius = 0.03;
  double rotation_threshold = 30.0 * std::numbers::pi / 180.0;
};

/// Total order: score descending, ties broken on pose content so the result
/// never depends on input order.
inline bool grasp_before(const GraspPose& a, const GraspPose& b) {
  if (a.score != b.score) return a.score > b.score;
  for (int r = 0; r < 3; ++r) {
    if (a.T[r] != b.T[r]) return a.T[r] < b.T[r];
    for (int c = 0; c < 3; ++c)
      if (a.R[r][c] != b.R[r][c]) return a.R[r][c] < b.R[r][c];
  }
  if (a.width != b.width) return a.width < b.width;
  return a.depth < b.depth;
}

/// Greedy duplicate suppression: walk in canonical score order, drop any grasp
/// within both the translation radius and the rotation threshold of a kept one.
inline std::vector<GraspPose> grasp_nms(std::vector<GraspPose> grasps,
                                        const NmsConfig& cfg = {}) {
  std::sort(grasps.begin(), grasps.end(), grasp_before);
  std::vector<GraspPose> kept;
  for (const GraspPose& g : grasps) {
    bool duplicate = false;
    for (const GraspPose& k : kept) {
      if (norm(g.T - k.T) <= cfg.translation_radius &&
          rotation_angle(g.R, k.R) <= cfg.rotation_threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(g);
  }
  return kept;
}

struct GraspJudgement {
  bool collision = false;
  bool has_contacts = false;
  double mu_min = std::numeric_limits<double>::infinity();
};

struct EvalConfig {
  NmsConfig nms;
  std::size_t top_k = 50;
  double w_max = 0.1;                  // closing-line search span, matches the gripper opening
  std::vector<double> mu_thresholds;   // defaults to {0.2, 0.4, ..., 1.2}
};

inline std::vector<double> default_mu_thresholds() {
  std::vector<double> mu;
  for (int i = 1; i <= 6; ++i) mu.push_back(0.2 * i);
  return mu;
}

struct EvalReport {
  std::vector<double> mu_thresholds;
  std::vector<double> ap_per_mu;
  double mean_ap = 0.0;
  std::size_t evaluated = 0;   // grasps kept after NMS and top-k
  std::size_t collisions = 0;
  std::size_t contactless = 0;
  std::vector<GraspJudgement> judged;  // one per evaluated grasp, in rank order
};

/// Average-precision protocol: NMS, keep the top_k best-scored grasps, judge
/// each against the analytic scene (collision-free and friction demand within
/// the threshold). Precision@j treats absent slots beyond the prediction count
/// as misses; AP at one threshold is the mean of Precision@1..top_k and the
/// headline number averages over the thresholds.
inline EvalReport evaluate_ap(const SyntheticScene& scene, const std::vector<GraspPose>& grasps,
                              const GripperModel& grip, const EvalConfig& cfg = {}) {
  EvalReport rep;
  rep.mu_thresholds = cfg.mu_thresholds.empty() ? default_mu_thresholds() : cfg.mu_thresholds;

  std::vector<GraspPose> ranked = grasp_nms(grasps, cfg.nms);
  if (ranked.size() > cfg.top_k) ranked.resize(cfg.top_k);
  rep.evaluated = ranked.size();

  rep.judged.reserve(ranked.size());
  for (const GraspPose& g : ranked) {
    const OracleCheck oc = check_grasp(scene, g, cfg.w_max, grip);
    GraspJudgement j;
    j.collision = oc.collision;
    j.has_contacts = oc.has_contacts;
    j.mu_min = oc.mu_min;
    if (j.collision) ++rep.collisions;
    if (!j.has_contacts) ++rep.contactless;
    rep.judged.push_back(j);
  }

  for (double mu : rep.mu_thresholds) {
    std::size_t tp = 0;
    double precision_sum = 0.0;
    for (std::size_t j = 1; j <= cfg.top_k; ++j) {
      if (j <= rep.judged.size()) {
        const GraspJudgement& gj = rep.judged[j - 1];
        if (!gj.collision && gj.has_contacts && gj.mu_min <= mu) ++tp;
      }
      precision_sum += static_cast<double>(tp) / static_cast<double>(j);
    }
    rep.ap_per_mu.push_back(precision_sum / static_cast<double>(cfg.top_k));
  }
  for (double ap : rep.ap_per_mu) rep.mean_ap += ap;
  rep.mean_ap /= static_cast<double>(rep.ap_per_mu.size());
  return rep;
}

/// Full forward pass + grid decode on one cloud.
inline std::vector<GraspPose> infer_grasps(const ParameterStore& store, const PointCloud& cloud,
                                           const ModelConfig& cfg, const ViewLattice& lattice,
                                           const SceneContext* ctx = nullptr) {
  Tape tape;
  ParamBinder binder(tape, store);
  GraphArena arena;
  ForwardResult fwd = granet_forward(tape, binder, store, cloud, cfg, lattice, arena, ctx);
  return decode_result(tape, fwd, lattice, cfg.gpg);
}

struct AblationReport {
  std::vector<double> learned_per_scene;
  std::vector<double> baseline_per_scene;
  double learned_ap = 0.0;
  double baseline_ap = 0.0;
  double delta() const { return learned_ap - baseline_ap; }
};

/// Same checkpoint, same scenes; only the point-selection strategy differs
/// (learned object/value selection vs farthest-point sampling).
inline AblationReport run_ablation(const ParameterStore& store,
                                   const std::vector<SyntheticScene>& scenes,
                                   const ModelConfig& cfg, const ViewLattice& lattice,
                                   const GripperModel& grip, const EvalConfig& ecfg) {
  ModelConfig learned = cfg;
  learned.mode = SelectionMode::granet;
  ModelConfig baseline = cfg;
  baseline.mode = SelectionMode::fps_baseline;

  AblationReport rep;
  for (const SyntheticScene& sc : scenes) {
    const SceneContext ctx = build_scene_context(sc.cloud, cfg.gfe);
    const EvalReport a =
        evaluate_ap(sc, infer_grasps(store, sc.cloud, learned, lattice, &ctx), grip, ecfg);
    const EvalReport b =
        evaluate_ap(sc, infer_grasps(store, sc.cloud, baseline, lattice, &ctx), grip, ecfg);
    rep.learned_per_scene.push_back(a.mean_ap);
    rep.baseline_per_scene.push_back(b.mean_ap);
    rep.learned_ap += a.mean_ap;
    rep.baseline_ap += b.mean_ap;
  }
  if (!scenes.empty()) {
    rep.learned_ap /= static_cast<double>(scenes.size());
    rep.baseline_ap /= static_cast<double>(scenes.size());
  }
  return rep;
}

}  // namespace granet
