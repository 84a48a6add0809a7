#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "granet/annotate.hpp"
#include "granet/io.hpp"
#include "granet/scene.hpp"

using namespace granet;

namespace {

SceneProfile small_profile() {
  SceneProfile prof;
  prof.n_points = 1200;
  prof.min_objects = 3;
  prof.max_objects = 5;
  return prof;
}

bool same_scene(const SyntheticScene& a, const SyntheticScene& b) {
  if (a.primitives.size() != b.primitives.size() || a.cloud.size() != b.cloud.size()) return false;
  for (std::size_t i = 0; i < a.primitives.size(); ++i) {
    const Primitive &pa = a.primitives[i], &pb = b.primitives[i];
    if (pa.kind != pb.kind || pa.dims != pb.dims || pa.T != pb.T) return false;
    for (int r = 0; r < 3; ++r)
      if (pa.R[r] != pb.R[r]) return false;
  }
  for (std::size_t i = 0; i < a.cloud.size(); ++i)
    if (a.cloud.points[i] != b.cloud.points[i] || a.cloud.object_id[i] != b.cloud.object_id[i])
      return false;
  return true;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Primitive sphere_at(double r, const Vec3& t) {
  Primitive p;
  p.kind = PrimitiveKind::sphere;
  p.dims = {r};
  p.T = t;
  return p;
}

Primitive box_at(double hx, double hy, double hz, const Vec3& t) {
  Primitive p;
  p.kind = PrimitiveKind::box;
  p.dims = {hx, hy, hz};
  p.T = t;
  return p;
}

GraspPose pose_at(const Vec3& t, double width, const Mat3& r = mat3_identity()) {
  GraspPose g;
  g.R = r;
  g.T = t;
  g.width = width;
  g.depth = 0.02;
  g.score = 0.0;
  return g;
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
  SceneProfile prof = small_profile();
  SyntheticScene a = generate_scene(7, prof);
  SyntheticScene b = generate_scene(7, prof);
  CHECK(same_scene(a, b));
  SyntheticScene c = generate_scene(8, prof);
  CHECK_FALSE(same_scene(a, c));
}

TEST_CASE("scene respects object counts, budgets, and the resting plane") {
  SceneProfile prof = small_profile();
  for (std::uint64_t seed : {1, 2, 3, 11}) {
    SyntheticScene s = generate_scene(seed, prof);
    CHECK(s.primitives.size() >= prof.min_objects);
    CHECK(s.primitives.size() <= prof.max_objects);
    REQUIRE(s.cloud.size() == prof.n_points);
    REQUIRE(s.cloud.object_id.size() == prof.n_points);

    std::map<int, std::size_t> counts;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) {
      const int id = s.cloud.object_id[i];
      REQUIRE(id >= 0);
      REQUIRE(id <= static_cast<int>(s.primitives.size()));
      ++counts[id];
      const Vec3& p = s.cloud.points[i];
      if (id == 0) {
        CHECK(p[2] == 0.0);
        CHECK(std::abs(p[0]) <= s.plane_extent);
        CHECK(std::abs(p[1]) <= s.plane_extent);
      } else {
        CHECK(std::abs(surface_residual(s.primitives[static_cast<std::size_t>(id - 1)], p)) <=
              1e-9);
      }
    }
    for (std::size_t k = 1; k <= s.primitives.size(); ++k)
      CHECK(counts[static_cast<int>(k)] >= prof.min_points_per_object);
    CHECK(counts[0] > 0);
  }
}

TEST_CASE("scene objects keep their separation margin") {
  SceneProfile prof = small_profile();
  for (std::uint64_t seed : {5, 6, 7}) {
    SyntheticScene s = generate_scene(seed, prof);
    for (std::size_t i = 0; i < s.primitives.size(); ++i) {
      for (std::size_t j = i + 1; j < s.primitives.size(); ++j) {
        const Vec3 d = s.primitives[i].T - s.primitives[j].T;
        const double dist = std::hypot(d[0], d[1]);
        const double need = detail::bounding_radius_xy(s.primitives[i]) +
                            detail::bounding_radius_xy(s.primitives[j]) + 0.005;
        CHECK(dist >= need - 1e-9);
      }
    }
  }
}

TEST_CASE("scene numbers are stored pre-rounded so a disk round trip is exact") {
  SyntheticScene s = generate_scene(13, small_profile());
  for (const Vec3& p : s.cloud.points)
    for (double v : p) CHECK(v == snap9(v));
  for (const Primitive& prim : s.primitives) {
    for (double v : prim.dims) CHECK(v == snap9(v));
    for (double v : prim.T) CHECK(v == snap9(v));
    for (const auto& row : prim.R)
      for (double v : row) CHECK(v == snap9(v));
  }

  const std::string path = temp_path("granet_scene_rt.txt");
  write_scene(s, path);
  SyntheticScene back = read_scene(path);
  CHECK(same_scene(s, back));
  CHECK(back.seed == s.seed);
  CHECK(back.plane_extent == s.plane_extent);

  // Object points still sit on the implicit surfaces after the round trip.
  for (std::size_t i = 0; i < back.cloud.size(); ++i) {
    const int id = back.cloud.object_id[i];
    if (id <= 0) continue;
    CHECK(std::abs(surface_residual(back.primitives[static_cast<std::size_t>(id - 1)],
                                    back.cloud.points[i])) <= 1e-9);
  }

  const std::string again = temp_path("granet_scene_rt2.txt");
  write_scene(back, again);
  std::ifstream f1(path), f2(again);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(again.c_str());
}

TEST_CASE("diametric sphere pinch needs no friction") {
  std::vector<Primitive> prims = {sphere_at(0.03, {0.0, 0.0, 0.03})};
  ClosingContacts cc = closing_contacts(prims, {0.0, 0.0, 0.03}, {0.0, 1.0, 0.0}, 0.05);
  REQUIRE(cc.valid);
  CHECK(cc.mu == Catch::Approx(0.0).margin(1e-12));
  CHECK(cc.width == Catch::Approx(0.06));
  CHECK(cc.contact_pos[1] == Catch::Approx(0.03));
  CHECK(cc.contact_neg[1] == Catch::Approx(-0.03));
}

TEST_CASE("off-center sphere chord needs friction matching the incline") {
  const double r = 0.03, incline = 17.0 * std::numbers::pi / 180.0;
  const double offset = r * std::sin(incline);
  std::vector<Primitive> prims = {sphere_at(r, {0.0, 0.0, 0.05})};
  ClosingContacts cc = closing_contacts(prims, {offset, 0.0, 0.05}, {0.0, 1.0, 0.0}, 0.05);
  REQUIRE(cc.valid);
  CHECK(cc.mu == Catch::Approx(std::tan(incline)).epsilon(1e-9));
  CHECK(cc.width == Catch::Approx(2.0 * r * std::cos(incline)).epsilon(1e-9));

  // The derived quality score for this demand.
  const double score = (1.2 - cc.mu) / 1.2;
  CHECK(score == Catch::Approx((1.2 - std::tan(incline)) / 1.2).epsilon(1e-9));
}

TEST_CASE("parallel box faces pinch with zero demand") {
  std::vector<Primitive> prims = {box_at(0.02, 0.015, 0.01, {0.0, 0.0, 0.01})};
  ClosingContacts cc = closing_contacts(prims, {0.0, 0.0, 0.01}, {0.0, 1.0, 0.0}, 0.05);
  REQUIRE(cc.valid);
  CHECK(cc.mu == Catch::Approx(0.0).margin(1e-12));
  CHECK(cc.width == Catch::Approx(0.03));
}

TEST_CASE("rotated box contacts follow its own closing axis") {
  Primitive box = box_at(0.02, 0.015, 0.01, {0.05, -0.02, 0.01});
  box.R = Mat3{{{0.8, -0.6, 0.0}, {0.6, 0.8, 0.0}, {0.0, 0.0, 1.0}}};
  const Vec3 closing = mat3_col(box.R, 1);
  ClosingContacts cc = closing_contacts({box}, box.T, closing, 0.05);
  REQUIRE(cc.valid);
  CHECK(cc.mu == Catch::Approx(0.0).margin(1e-12));
  CHECK(cc.width == Catch::Approx(0.03));
}

TEST_CASE("closing keeps the outermost crossing on each side") {
  // A small sphere nested inside a box: the box faces win on both sides.
  std::vector<Primitive> prims = {box_at(0.02, 0.01, 0.02, {0.0, 0.0, 0.02}),
                                  sphere_at(0.005, {0.0, 0.0, 0.02})};
  ClosingContacts cc = closing_contacts(prims, {0.0, 0.0, 0.02}, {0.0, 1.0, 0.0}, 0.05);
  REQUIRE(cc.valid);
  CHECK(cc.width == Catch::Approx(0.02));
  CHECK(cc.mu == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("entry-face contact pointing along the closing line is rejected") {
  // Second box ahead on the closing line: with the span capped before its far
  // face, the outermost + crossing is its entry face, whose normal opposes the
  // pinch, so no valid contact pair exists.
  std::vector<Primitive> prims = {box_at(0.02, 0.01, 0.02, {0.0, 0.0, 0.02}),
                                  box_at(0.02, 0.01, 0.02, {0.0, 0.04, 0.02})};
  ClosingContacts capped = closing_contacts(prims, {0.0, 0.0, 0.02}, {0.0, 1.0, 0.0}, 0.04);
  CHECK_FALSE(capped.valid);
  // With the full span the far face of the second box is reached and the pair
  // is a proper pinch again.
  ClosingContacts full = closing_contacts(prims, {0.0, 0.0, 0.02}, {0.0, 1.0, 0.0}, 0.05);
  REQUIRE(full.valid);
  CHECK(full.width == Catch::Approx(0.06));
}

TEST_CASE("closing finds nothing when the line misses the scene") {
  std::vector<Primitive> prims = {sphere_at(0.02, {0.0, 0.0, 0.02})};
  ClosingContacts cc = closing_contacts(prims, {0.2, 0.0, 0.02}, {0.0, 1.0, 0.0}, 0.05);
  CHECK_FALSE(cc.valid);

  SyntheticScene scene;
  scene.primitives = prims;
  OracleCheck r = check_grasp(scene, pose_at({0.2, 0.0, 0.02}, 0.04), 0.1, GripperModel{});
  CHECK_FALSE(r.has_contacts);
  CHECK(std::isinf(r.mu_min));
}

TEST_CASE("collision volume flags strictly interior points only") {
  GripperModel grip;
  GraspPose pose = pose_at({0.0, 0.0, 0.0}, 0.04);
  auto with_point = [&](const Vec3& p) {
    PointCloud cloud;
    cloud.points = {p};
    return collision_check(cloud, pose, grip);
  };
  // Finger interior: x in (-0.05, 0.01), |y| in (0.02, 0.03), |z| < 0.01.
  CHECK(with_point({0.0, 0.025, 0.0}));
  CHECK(with_point({-0.04, -0.025, 0.005}));
  // Between the fingers is free space.
  CHECK_FALSE(with_point({0.0, 0.0, 0.0}));
  CHECK_FALSE(with_point({0.0, 0.019, 0.0}));
  // Outside the fingers laterally.
  CHECK_FALSE(with_point({0.0, 0.031, 0.0}));
  // Above and below the jaw height.
  CHECK_FALSE(with_point({0.0, 0.025, 0.011}));
  // The connecting plate spans the full opening behind the fingers.
  CHECK(with_point({-0.06, 0.0, 0.0}));
  CHECK_FALSE(with_point({-0.075, 0.0, 0.0}));
  // Boundary points are not strictly inside.
  CHECK_FALSE(with_point({0.01, 0.025, 0.0}));
  CHECK_FALSE(with_point({0.0, 0.02, 0.0}));
  CHECK_FALSE(with_point({0.0, 0.025, 0.01}));
}

TEST_CASE("collision ignores points near the finger contacts") {
  GripperModel grip;
  GraspPose pose = pose_at({0.0, 0.0, 0.0}, 0.04);
  PointCloud cloud;
  cloud.points = {{0.0, 0.021, 0.0}};  // just inside the + finger
  CHECK(collision_check(cloud, pose, grip));
  const std::vector<Vec3> contacts = {{0.0, 0.02, 0.0}, {0.0, -0.02, 0.0}};
  CHECK_FALSE(collision_check(cloud, pose, grip, contacts));
  // A point farther than the exclusion radius still collides.
  cloud.points = {{-0.04, 0.025, 0.0}};
  CHECK(collision_check(cloud, pose, grip, contacts));
}

TEST_CASE("wider openings sweep a wider collision volume") {
  GripperModel grip;
  PointCloud cloud;
  cloud.points = {{0.0, 0.035, 0.0}};
  CHECK_FALSE(collision_check(cloud, pose_at({0.0, 0.0, 0.0}, 0.04), grip));
  CHECK(collision_check(cloud, pose_at({0.0, 0.0, 0.0}, 0.06), grip));
}

TEST_CASE("annotations replay exactly under the independent re-check") {
  SceneProfile prof = small_profile();
  SyntheticScene scene = generate_scene(21, prof);
  GpgConfig gpg;
  gpg.views = 60;
  gpg.angle_bins = 6;
  gpg.depth_bins = {0.01, 0.03};
  ViewLattice lattice = fibonacci_viewpoints(gpg.views);
  GripperModel grip;
  AnnotateConfig acfg;
  GraspAnnotationSet ann = annotate_grasps(scene, lattice, gpg, grip, acfg);
  REQUIRE(ann.total() > 0);

  std::size_t checked = 0;
  for (const auto& [idx, list] : ann.per_point) {
    REQUIRE(idx < scene.cloud.size());
    CHECK(scene.cloud.object_id[idx] > 0);
    for (const GraspAnnotation& g : list) {
      CHECK(g.mu_min < acfg.mu_max);
      CHECK(g.score == Catch::Approx((acfg.mu_max - g.mu_min) / acfg.mu_max));
      CHECK(g.width <= gpg.w_max + 1e-12);

      GraspPose pose;
      pose.R = assemble_rotation(g.approach, g.angle);
      pose.depth = g.depth;
      pose.T = scene.cloud.points[idx] + g.depth * g.approach;
      pose.width = g.width;
      OracleCheck r = check_grasp(scene, pose, gpg.w_max, grip);
      CHECK(r.has_contacts);
      CHECK_FALSE(r.collision);
      CHECK(std::abs(r.mu_min - g.mu_min) <= 1e-9);
      if (++checked >= 400) break;
    }
    if (checked >= 400) break;
  }
  REQUIRE(checked > 50);
}

TEST_CASE("annotation views approach against the surface normal") {
  SyntheticScene scene = generate_scene(22, small_profile());
  GpgConfig gpg;
  gpg.views = 40;
  gpg.angle_bins = 4;
  gpg.depth_bins = {0.02};
  ViewLattice lattice = fibonacci_viewpoints(gpg.views);
  AnnotateConfig acfg;
  GraspAnnotationSet ann = annotate_grasps(scene, lattice, gpg, GripperModel{}, acfg);
  std::size_t seen = 0;
  for (const auto& [idx, list] : ann.per_point) {
    const int id = scene.cloud.object_id[idx];
    const Vec3 n =
        surface_normal(scene.primitives[static_cast<std::size_t>(id - 1)], scene.cloud.points[idx]);
    std::set<std::array<double, 3>> views;
    for (const GraspAnnotation& g : list) {
      CHECK(dot(g.approach, n) <= acfg.normal_alignment + 1e-12);
      views.insert({g.approach[0], g.approach[1], g.approach[2]});
    }
    CHECK(views.size() <= acfg.max_views_per_point);
    if (++seen >= 40) break;
  }
  REQUIRE(seen > 0);
}

TEST_CASE("annotation sets survive a disk round trip") {
  SyntheticScene scene = generate_scene(23, small_profile());
  GpgConfig gpg;
  gpg.views = 30;
  gpg.angle_bins = 4;
  gpg.depth_bins = {0.02};
  GraspAnnotationSet ann =
      annotate_grasps(scene, fibonacci_viewpoints(gpg.views), gpg, GripperModel{});
  REQUIRE(ann.total() > 0);

  const std::string path = temp_path("granet_ann_rt.txt");
  write_annotations(ann, path);
  GraspAnnotationSet back = read_annotations(path);
  REQUIRE(back.total() == ann.total());
  for (const auto& [idx, list] : ann.per_point) {
    auto it = back.per_point.find(idx);
    REQUIRE(it != back.per_point.end());
    REQUIRE(it->second.size() == list.size());
    // Fields are written with 9 significant digits, so the round trip lands on
    // the snapped value exactly.
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (int c = 0; c < 3; ++c)
        CHECK(it->second[i].approach[c] == snap9(list[i].approach[c]));
      CHECK(it->second[i].angle == snap9(list[i].angle));
      CHECK(it->second[i].depth == snap9(list[i].depth));
      CHECK(it->second[i].width == snap9(list[i].width));
      CHECK(it->second[i].mu_min == snap9(list[i].mu_min));
      CHECK(it->second[i].score == snap9(list[i].score));
    }
  }
  std::remove(path.c_str());
}
