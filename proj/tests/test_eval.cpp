#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "granet/eval.hpp"
#include "granet/io.hpp"

using namespace granet;

namespace {

GraspPose make_grasp(const Vec3& t, double score, double roll = 0.0,
                     const Vec3& approach = {1.0, 0.0, 0.0}) {
  GraspPose g;
  g.R = assemble_rotation(normalized(approach), roll);
  g.T = t;
  g.width = 0.04;
  g.depth = 0.02;
  g.score = score;
  return g;
}

bool same_pose(const GraspPose& a, const GraspPose& b) {
  if (a.score != b.score || a.width != b.width || a.depth != b.depth || a.T != b.T) return false;
  for (int r = 0; r < 3; ++r)
    if (a.R[r] != b.R[r]) return false;
  return true;
}

/// Sphere resting scene with a surface-sampled cloud, no plane points.
SyntheticScene sphere_scene(double r, const Vec3& center, std::size_t n_points,
                            std::uint64_t seed) {
  SyntheticScene scene;
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.dims = {r};
  p.T = center;
  scene.primitives = {p};
  Rng rng(seed);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    scene.cloud.points.push_back(center + r * Vec3{rxy * std::cos(phi), rxy * std::sin(phi), z});
    scene.cloud.object_id.push_back(1);
  }
  return scene;
}

double harmonic(std::size_t n) {
  double h = 0.0;
  for (std::size_t j = 1; j <= n; ++j) h += 1.0 / static_cast<double>(j);
  return h;
}

}  // namespace

TEST_CASE("nms suppresses poses close in both translation and rotation") {
  std::vector<GraspPose> grasps = {
      make_grasp({0.0, 0.0, 0.0}, 0.9),
      make_grasp({0.01, 0.0, 0.0}, 0.8),            // near + same rotation: dropped
      make_grasp({0.2, 0.0, 0.0}, 0.7),             // far: kept
      make_grasp({0.0, 0.0, 0.0}, 0.6, std::numbers::pi / 4.0),  // near but 45 deg off: kept
  };
  auto kept = grasp_nms(grasps, NmsConfig{});
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].score == 0.9);
  CHECK(kept[1].score == 0.7);
  CHECK(kept[2].score == 0.6);

  // A 20 degree roll is inside the default 30 degree threshold.
  std::vector<GraspPose> close = {make_grasp({0.0, 0.0, 0.0}, 0.9),
                                  make_grasp({0.0, 0.0, 0.0}, 0.8, 20.0 * std::numbers::pi / 180.0)};
  CHECK(grasp_nms(close, NmsConfig{}).size() == 1);
}

TEST_CASE("nms output does not depend on input order") {
  Rng rng(101);
  std::vector<GraspPose> grasps;
  for (int i = 0; i < 40; ++i) {
    const Vec3 t = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.0, 0.1)};
    const Vec3 v = normalized(
        Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    // Coarse score grid forces exact ties.
    const double score = std::floor(rng.uniform(0.0, 5.0)) / 5.0;
    grasps.push_back(make_grasp(t, score, rng.uniform(0.0, std::numbers::pi), v));
  }
  auto base = grasp_nms(grasps, NmsConfig{});
  REQUIRE(!base.empty());
  Rng shuffler(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<GraspPose> mixed = grasps;
    shuffler.shuffle(mixed);
    auto kept = grasp_nms(mixed, NmsConfig{});
    REQUIRE(kept.size() == base.size());
    for (std::size_t i = 0; i < kept.size(); ++i) CHECK(same_pose(kept[i], base[i]));
  }
}

TEST_CASE("a single true positive at rank one earns the harmonic mean precision") {
  const double r = 0.025;
  const Vec3 center = {0.0, 0.0, 0.05};
  SyntheticScene scene = sphere_scene(r, center, 150, 3);

  // Diametric pinch through the center: friction demand zero, no collision.
  std::vector<GraspPose> preds = {make_grasp(center, 0.8)};
  preds[0].width = 2.0 * r;
  EvalReport rep = evaluate_ap(scene, preds, GripperModel{}, EvalConfig{});

  REQUIRE(rep.evaluated == 1);
  CHECK(rep.collisions == 0);
  CHECK(rep.contactless == 0);
  REQUIRE(rep.judged.size() == 1);
  CHECK(rep.judged[0].mu_min == Catch::Approx(0.0).margin(1e-9));

  const double want = harmonic(50) / 50.0;
  for (double ap : rep.ap_per_mu) CHECK(ap == Catch::Approx(want));
  CHECK(rep.mean_ap == Catch::Approx(want));
}

TEST_CASE("a miss ranked first delays every precision term") {
  const double r = 0.025;
  const Vec3 center = {0.0, 0.0, 0.05};
  SyntheticScene scene = sphere_scene(r, center, 150, 5);

  std::vector<GraspPose> preds = {
      make_grasp({0.3, 0.3, 0.3}, 0.9),  // misses the sphere entirely
      make_grasp(center, 0.5),
  };
  preds[1].width = 2.0 * r;
  EvalReport rep = evaluate_ap(scene, preds, GripperModel{}, EvalConfig{});
  REQUIRE(rep.evaluated == 2);
  CHECK(rep.contactless == 1);
  const double want = (harmonic(50) - 1.0) / 50.0;
  CHECK(rep.mean_ap == Catch::Approx(want));
}

TEST_CASE("no predictions means zero precision everywhere") {
  SyntheticScene scene = sphere_scene(0.03, {0.0, 0.0, 0.05}, 100, 7);
  EvalReport rep = evaluate_ap(scene, {}, GripperModel{}, EvalConfig{});
  CHECK(rep.evaluated == 0);
  CHECK(rep.mean_ap == 0.0);
  for (double ap : rep.ap_per_mu) CHECK(ap == 0.0);
  CHECK(rep.ap_per_mu.size() == 6);
}

TEST_CASE("low-ranked grasps beyond the cutoff are ignored") {
  const double r = 0.025;
  const Vec3 center = {0.0, 0.0, 0.05};
  SyntheticScene scene = sphere_scene(r, center, 150, 9);

  // 55 far-apart misses outrank the one good grasp, pushing it past top_k.
  std::vector<GraspPose> preds;
  for (int i = 0; i < 55; ++i)
    preds.push_back(make_grasp({1.0 + 0.2 * i, 0.0, 0.0}, 0.9 - 0.001 * i));
  GraspPose good = make_grasp(center, 0.01);
  good.width = 2.0 * r;
  preds.push_back(good);

  EvalReport rep = evaluate_ap(scene, preds, GripperModel{}, EvalConfig{});
  CHECK(rep.evaluated == 50);
  CHECK(rep.mean_ap == 0.0);
}

TEST_CASE("evaluation decomposes into nms, oracle calls, and precision sums") {
  const double r = 0.03;
  const Vec3 center = {0.0, 0.0, 0.05};
  SyntheticScene scene = sphere_scene(r, center, 250, 11);
  GripperModel grip;
  EvalConfig cfg;
  cfg.top_k = 10;

  Rng rng(301);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GraspPose> preds;
    const int n = 5 + static_cast<int>(rng.uniform(0.0, 30.0));
    for (int i = 0; i < n; ++i) {
      const Vec3 off = {rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
                        rng.uniform(-0.06, 0.06)};
      const Vec3 v = normalized(
          Vec3{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
      GraspPose g = make_grasp(center + off, rng.uniform(0.0, 1.0),
                               rng.uniform(0.0, std::numbers::pi), v);
      g.width = rng.uniform(0.02, 0.08);
      preds.push_back(g);
    }
    EvalReport rep = evaluate_ap(scene, preds, grip, cfg);

    // Reference: the same protocol assembled from the public pieces.
    std::vector<GraspPose> ranked = grasp_nms(preds, cfg.nms);
    if (ranked.size() > cfg.top_k) ranked.resize(cfg.top_k);
    REQUIRE(rep.evaluated == ranked.size());
    REQUIRE(rep.judged.size() == ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const OracleCheck oc = check_grasp(scene, ranked[i], cfg.w_max, grip);
      CHECK(rep.judged[i].collision == oc.collision);
      CHECK(rep.judged[i].has_contacts == oc.has_contacts);
      CHECK(rep.judged[i].mu_min == oc.mu_min);
    }
    const auto thresholds = default_mu_thresholds();
    REQUIRE(rep.ap_per_mu.size() == thresholds.size());
    for (std::size_t m = 0; m < thresholds.size(); ++m) {
      std::size_t tp = 0;
      double sum = 0.0;
      for (std::size_t j = 1; j <= cfg.top_k; ++j) {
        if (j <= rep.judged.size() && !rep.judged[j - 1].collision &&
            rep.judged[j - 1].has_contacts && rep.judged[j - 1].mu_min <= thresholds[m])
          ++tp;
        sum += static_cast<double>(tp) / static_cast<double>(j);
      }
      CHECK(rep.ap_per_mu[m] == Catch::Approx(sum / cfg.top_k));
    }
    // Relaxing the friction threshold can only help.
    for (std::size_t m = 1; m < rep.ap_per_mu.size(); ++m)
      CHECK(rep.ap_per_mu[m] >= rep.ap_per_mu[m - 1]);
  }
}

TEST_CASE("merged reports average precision and sum the counters") {
  EvalReport a;
  a.mu_thresholds = {0.4, 0.8};
  a.ap_per_mu = {0.2, 0.6};
  a.mean_ap = 0.4;
  a.evaluated = 50;
  a.collisions = 3;
  a.contactless = 2;
  EvalReport b;
  b.mu_thresholds = {0.4, 0.8};
  b.ap_per_mu = {0.4, 0.8};
  b.mean_ap = 0.6;
  b.evaluated = 40;
  b.collisions = 1;
  b.contactless = 0;

  EvalReport m = merge_eval_reports({a, b});
  CHECK(m.ap_per_mu[0] == Catch::Approx(0.3));
  CHECK(m.ap_per_mu[1] == Catch::Approx(0.7));
  CHECK(m.mean_ap == Catch::Approx(0.5));
  CHECK(m.evaluated == 90);
  CHECK(m.collisions == 4);
  CHECK(m.contactless == 2);

  CHECK_THROWS_WITH(merge_eval_reports({}), Catch::Matchers::ContainsSubstring("no reports"));
  EvalReport c;
  c.mu_thresholds = {0.4};
  c.ap_per_mu = {0.1};
  CHECK_THROWS_WITH(merge_eval_reports({a, c}),
                    Catch::Matchers::ContainsSubstring("threshold count"));
}

TEST_CASE("ablation evaluates both selection strategies on shared scenes") {
  GfeConfig gfe;
  gfe.hops = 2;
  gfe.embed_dim = 8;
  gfe.knn = 6;
  gfe.resample = 96;
  gfe.edge_out = 16;
  ModelConfig cfg;
  cfg.gfe = gfe;
  cfg.gpg.views = 30;
  cfg.gpg.angle_bins = 4;
  cfg.gpg.depth_bins = {0.01, 0.03};
  cfg.gpg.crop_points = 16;
  cfg.n_obj = 48;
  cfg.n_val = 24;
  cfg.dov_levels = 4;

  ParameterStore store;
  Rng rng(401);
  model_init(store, cfg, rng);
  ViewLattice lattice = fibonacci_viewpoints(cfg.gpg.views);

  SceneProfile prof;
  prof.n_points = 600;
  prof.min_objects = 3;
  prof.max_objects = 4;
  std::vector<SyntheticScene> scenes = {generate_scene(31, prof), generate_scene(32, prof)};

  EvalConfig ecfg;
  ecfg.top_k = 20;
  AblationReport rep = run_ablation(store, scenes, cfg, lattice, GripperModel{}, ecfg);
  REQUIRE(rep.learned_per_scene.size() == 2);
  REQUIRE(rep.baseline_per_scene.size() == 2);
  CHECK(rep.learned_ap ==
        Catch::Approx((rep.learned_per_scene[0] + rep.learned_per_scene[1]) / 2.0));
  CHECK(rep.baseline_ap ==
        Catch::Approx((rep.baseline_per_scene[0] + rep.baseline_per_scene[1]) / 2.0));
  CHECK(std::isfinite(rep.delta()));
  for (double ap : rep.learned_per_scene) {
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
  }
}
