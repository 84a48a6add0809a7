#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "granet/decimal.hpp"
#include "granet/geometry.hpp"
#include "granet/pointcloud.hpp"
#include "granet/rng.hpp"

namespace granet {

enum class PrimitiveKind { box, sphere, cylinder };

/// Local frames: box is centered at its origin with half extents dims=(hx,hy,hz);
/// sphere is centered with dims=(r); cylinder stands on its origin, axis +z,
/// dims=(r,h) with local z in [0,h]. T places the local origin in the world.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::box;
  std::vector<double> dims;
  Mat3 R = mat3_identity();
  Vec3 T = {0, 0, 0};
};

struct SceneProfile {
  std::size_t n_points = 2048;
  double plane_extent = 0.3;
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;
  double object_fraction = 0.65;  // share of the point budget on object surfaces
  bool cull_hidden = true;        // drop faces turned away from the overhead camera
  Vec3 camera = {0, 0, 1};
  std::size_t min_points_per_object = 50;
};

/// Objects resting on the z=0 plane plus the sampled cloud. Point object ids:
/// 0 = plane, i+1 = primitives[i]. Every stored number is already rounded to
/// the on-disk 9-significant-digit precision, so serialization is lossless.
struct SyntheticScene {
  std::uint64_t seed = 0;
  double plane_extent = 0.3;
  std::vector<Primitive> primitives;
  PointCloud cloud;
};

inline Vec3 to_local(const Primitive& prim, const Vec3& p) {
  return mat3_apply_transposed(prim.R, p - prim.T);
}

/// Signed implicit value, zero on the surface and negative inside.
inline double surface_residual(const Primitive& prim, const Vec3& p) {
  const Vec3 q = to_local(prim, p);
  switch (prim.kind) {
    case PrimitiveKind::box:
      return std::max({std::abs(q[0]) - prim.dims[0], std::abs(q[1]) - prim.dims[1],
                       std::abs(q[2]) - prim.dims[2]});
    case PrimitiveKind::sphere:
      return norm(q) - prim.dims[0];
    case PrimitiveKind::cylinder:
      return std::max({std::hypot(q[0], q[1]) - prim.dims[0], q[2] - prim.dims[1], -q[2]});
  }
  throw std::logic_error("surface_residual: unknown primitive kind");
}

/// Outward unit normal of the nearest face/region for a point on (or near) the
/// surface.
inline Vec3 surface_normal(const Primitive& prim, const Vec3& p) {
  const Vec3 q = to_local(prim, p);
  Vec3 n_local{0, 0, 0};
  switch (prim.kind) {
    case PrimitiveKind::box: {
      std::size_t axis = 0;
      double best = std::abs(q[0]) - prim.dims[0];
      for (std::size_t a = 1; a < 3; ++a) {
        const double s = std::abs(q[a]) - prim.dims[a];
        if (s > best) {
          best = s;
          axis = a;
        }
      }
      n_local[axis] = q[axis] >= 0.0 ? 1.0 : -1.0;
      break;
    }
    case PrimitiveKind::sphere:
      n_local = normalized(q);
      break;
    case PrimitiveKind::cylinder: {
      const double rho = std::hypot(q[0], q[1]);
      const double lateral = rho - prim.dims[0];
      const double top = q[2] - prim.dims[1];
      const double bottom = -q[2];
      if (lateral >= top && lateral >= bottom && rho > 0.0)
        n_local = {q[0] / rho, q[1] / rho, 0.0};
      else if (top >= bottom)
        n_local = {0, 0, 1};
      else
        n_local = {0, 0, -1};
      break;
    }
  }
  return mat3_apply(prim.R, n_local);
}

/// One intersection of a line with a primitive surface.
struct Crossing {
  double t = 0.0;
  Vec3 normal = {0, 0, 0};  // outward, world frame
};

/// All crossings of the line C + t*dir (dir unit) with the primitive surface,
/// appended to `out` unsorted. Face-inclusion slop is 1e-12.
inline void line_crossings(const Primitive& prim, const Vec3& C, const Vec3& dir,
                           std::vector<Crossing>& out) {
  constexpr double kSlop = 1e-12;
  constexpr double kParallel = 1e-14;
  const Vec3 c0 = to_local(prim, C);
  const Vec3 dl = mat3_apply_transposed(prim.R, dir);
  switch (prim.kind) {
    case PrimitiveKind::box: {
      for (std::size_t a = 0; a < 3; ++a) {
        if (std::abs(dl[a]) < kParallel) continue;
        for (double s : {1.0, -1.0}) {
          const double t = (s * prim.dims[a] - c0[a]) / dl[a];
          const Vec3 q = c0 + t * dl;
          bool inside = true;
          for (std::size_t b = 0; b < 3; ++b)
            if (b != a && std::abs(q[b]) > prim.dims[b] + kSlop) inside = false;
          if (!inside) continue;
          Vec3 n_local{0, 0, 0};
          n_local[a] = s;
          out.push_back({t, mat3_apply(prim.R, n_local)});
        }
      }
      break;
    }
    case PrimitiveKind::sphere: {
      const double r = prim.dims[0];
      const double b = 2.0 * dot(dl, c0);
      const double c = dot(c0, c0) - r * r;
      const double disc = b * b - 4.0 * c;
      if (disc < 0.0) break;
      const double root = std::sqrt(disc);
      for (double t : {(-b - root) / 2.0, (-b + root) / 2.0}) {
        const Vec3 q = c0 + t * dl;
        out.push_back({t, mat3_apply(prim.R, (1.0 / r) * q)});
      }
      break;
    }
    case PrimitiveKind::cylinder: {
      const double r = prim.dims[0], h = prim.dims[1];
      const double a2 = dl[0] * dl[0] + dl[1] * dl[1];
      if (a2 > kParallel) {
        const double b2 = 2.0 * (c0[0] * dl[0] + c0[1] * dl[1]);
        const double c2 = c0[0] * c0[0] + c0[1] * c0[1] - r * r;
        const double disc = b2 * b2 - 4.0 * a2 * c2;
        if (disc >= 0.0) {
          const double root = std::sqrt(disc);
          for (double t : {(-b2 - root) / (2.0 * a2), (-b2 + root) / (2.0 * a2)}) {
            const Vec3 q = c0 + t * dl;
            if (q[2] < -kSlop || q[2] > h + kSlop) continue;
            const double rho = std::hypot(q[0], q[1]);
            if (rho == 0.0) continue;
            out.push_back({t, mat3_apply(prim.R, {q[0] / rho, q[1] / rho, 0.0})});
          }
        }
      }
      if (std::abs(dl[2]) > kParallel) {
        for (auto [z, s] : {std::pair{h, 1.0}, std::pair{0.0, -1.0}}) {
          const double t = (z - c0[2]) / dl[2];
          const Vec3 q = c0 + t * dl;
          if (std::hypot(q[0], q[1]) > r + kSlop) continue;
          out.push_back({t, mat3_apply(prim.R, {0.0, 0.0, s})});
        }
      }
      break;
    }
  }
}

namespace detail {

/// Yaw choices whose cosine/sine are exact 9-significant-digit decimals, so a
/// rotated box's stored rotation matrix stays orthonormal to machine precision
/// after on-disk rounding (keeps implicit-surface residuals below 1e-9).
inline Mat3 exact_yaw_rotation(std::size_t pick) {
  static constexpr double kPairs[][2] = {
      {1.0, 0.0},       {0.8, 0.6},       {0.6, 0.8},       {0.96, 0.28},    {0.28, 0.96},
      {0.936, 0.352},   {0.352, 0.936},   {0.8432, 0.5376}, {0.5376, 0.8432}, {0.0, 1.0},
  };
  constexpr std::size_t kBase = sizeof(kPairs) / sizeof(kPairs[0]);
  const std::size_t quadrant = pick / kBase;
  const double c0 = kPairs[pick % kBase][0], s0 = kPairs[pick % kBase][1];
  double c = c0, s = s0;
  if (quadrant == 1) {
    c = -s0;
    s = c0;
  } else if (quadrant == 2) {
    c = -c0;
    s = -s0;
  } else if (quadrant == 3) {
    c = s0;
    s = -c0;
  }
  return Mat3{{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

constexpr std::size_t kYawChoices = 40;

inline double bounding_radius_xy(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::box:
      return std::hypot(p.dims[0], p.dims[1]);
    case PrimitiveKind::sphere:
    case PrimitiveKind::cylinder:
      return p.dims[0];
  }
  throw std::logic_error("bounding_radius_xy: unknown primitive kind");
}

inline double sampled_area(const Primitive& p) {
  switch (p.kind) {
    case PrimitiveKind::box:  // four side faces plus the top; the bottom rests on the plane
      return 8.0 * p.dims[1] * p.dims[2] + 8.0 * p.dims[0] * p.dims[2] +
             4.0 * p.dims[0] * p.dims[1];
    case PrimitiveKind::sphere:
      return 4.0 * std::numbers::pi * p.dims[0] * p.dims[0];
    case PrimitiveKind::cylinder:  // lateral plus top cap
      return std::numbers::pi * p.dims[0] * (2.0 * p.dims[1] + p.dims[0]);
  }
  throw std::logic_error("sampled_area: unknown primitive kind");
}

/// Draws a surface point and its outward normal in the local frame.
inline void sample_surface(const Primitive& p, Rng& rng, Vec3& q, Vec3& n) {
  switch (p.kind) {
    case PrimitiveKind::box: {
      const double hx = p.dims[0], hy = p.dims[1], hz = p.dims[2];
      const double ax = 4.0 * hy * hz, ay = 4.0 * hx * hz, az = 4.0 * hx * hy;
      const double r = rng.uniform(0.0, 2.0 * ax + 2.0 * ay + az);
      if (r < 2.0 * ax) {
        const double s = r < ax ? 1.0 : -1.0;
        q = {s * hx, rng.uniform(-hy, hy), rng.uniform(-hz, hz)};
        n = {s, 0, 0};
      } else if (r < 2.0 * ax + 2.0 * ay) {
        const double s = r < 2.0 * ax + ay ? 1.0 : -1.0;
        q = {rng.uniform(-hx, hx), s * hy, rng.uniform(-hz, hz)};
        n = {0, s, 0};
      } else {
        q = {rng.uniform(-hx, hx), rng.uniform(-hy, hy), hz};
        n = {0, 0, 1};
      }
      break;
    }
    case PrimitiveKind::sphere: {
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
      n = {rxy * std::cos(phi), rxy * std::sin(phi), z};
      q = p.dims[0] * n;
      break;
    }
    case PrimitiveKind::cylinder: {
      const double r = p.dims[0], h = p.dims[1];
      const double lateral = 2.0 * std::numbers::pi * r * h;
      const double cap = std::numbers::pi * r * r;
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      if (rng.uniform(0.0, lateral + cap) < lateral) {
        n = {std::cos(phi), std::sin(phi), 0.0};
        q = {r * n[0], r * n[1], rng.uniform(0.0, h)};
      } else {
        const double rho = r * std::sqrt(rng.uniform01());
        q = {rho * std::cos(phi), rho * std::sin(phi), h};
        n = {0, 0, 1};
      }
      break;
    }
  }
}

}  // namespace detail

/// Deterministic per seed: draws 3-8 non-overlapping primitives resting on the
/// plane (bounding-circle separation >= 5 mm), allocates the point budget
/// area-weighted with a per-object floor, samples surfaces with optional
/// overhead-camera culling, and fills the rest of the budget with plane points.
inline SyntheticScene generate_scene(std::uint64_t seed, const SceneProfile& prof) {
  Rng rng(mix_seed(seed, 0x5ce9e));
  SyntheticScene scene;
  scene.seed = seed;
  scene.plane_extent = snap9(prof.plane_extent);

  const std::size_t n_objects =
      prof.min_objects +
      rng.uniform_index(prof.max_objects - prof.min_objects + 1);
  std::vector<double> radii;
  for (std::size_t k = 0; k < n_objects; ++k) {
    Primitive prim;
    const std::size_t kind = rng.uniform_index(3);
    if (kind == 0) {
      prim.kind = PrimitiveKind::box;
      prim.dims = {snap9(rng.uniform(0.015, 0.045)), snap9(rng.uniform(0.015, 0.045)),
                   snap9(rng.uniform(0.015, 0.05))};
      prim.R = detail::exact_yaw_rotation(rng.uniform_index(detail::kYawChoices));
      prim.T[2] = prim.dims[2];
    } else if (kind == 1) {
      prim.kind = PrimitiveKind::sphere;
      prim.dims = {snap9(rng.uniform(0.02, 0.045))};
      prim.T[2] = prim.dims[0];
    } else {
      prim.kind = PrimitiveKind::cylinder;
      prim.dims = {snap9(rng.uniform(0.015, 0.0425)), snap9(rng.uniform(0.03, 0.1))};
      prim.T[2] = 0.0;
    }
    const double rb = detail::bounding_radius_xy(prim);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double span = scene.plane_extent - rb;
      const double x = snap9(rng.uniform(-span, span));
      const double y = snap9(rng.uniform(-span, span));
      bool clear = true;
      for (std::size_t j = 0; j < scene.primitives.size(); ++j) {
        const Vec3& o = scene.primitives[j].T;
        if (std::hypot(x - o[0], y - o[1]) < rb + radii[j] + 0.005) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      prim.T[0] = x;
      prim.T[1] = y;
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("generate_scene: could not place object " + std::to_string(k + 1) +
                               " after 1000 attempts (seed " + std::to_string(seed) + ")");
    radii.push_back(rb);
    scene.primitives.push_back(std::move(prim));
  }

  const auto object_budget =
      static_cast<std::size_t>(std::llround(prof.object_fraction * static_cast<double>(prof.n_points)));
  if (object_budget < prof.min_points_per_object * n_objects)
    throw std::runtime_error("generate_scene: point budget " + std::to_string(prof.n_points) +
                             " too small for " + std::to_string(n_objects) + " objects");
  double total_area = 0.0;
  for (const Primitive& p : scene.primitives) total_area += detail::sampled_area(p);
  std::vector<std::size_t> quota(n_objects);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < n_objects; ++k) {
    const double share = detail::sampled_area(scene.primitives[k]) / total_area *
                         static_cast<double>(object_budget);
    quota[k] = std::max<std::size_t>(prof.min_points_per_object,
                                     static_cast<std::size_t>(std::floor(share)));
    assigned += quota[k];
  }
  for (std::size_t k = 0; assigned < object_budget; k = (k + 1) % n_objects) {
    ++quota[k];
    ++assigned;
  }
  while (assigned > object_budget) {  // floors can overshoot; trim the largest quotas
    std::size_t big = 0;
    for (std::size_t k = 1; k < n_objects; ++k)
      if (quota[k] > quota[big]) big = k;
    if (quota[big] <= prof.min_points_per_object)
      throw std::runtime_error("generate_scene: cannot satisfy per-object point floor");
    --quota[big];
    --assigned;
  }

  for (std::size_t k = 0; k < n_objects; ++k) {
    const Primitive& prim = scene.primitives[k];
    std::size_t kept = 0, guard = 0;
    const std::size_t max_draws = 200 * quota[k] + 1000;
    while (kept < quota[k]) {
      if (++guard > max_draws)
        throw std::runtime_error("generate_scene: surface sampling starved for object " +
                                 std::to_string(k + 1) + " (seed " + std::to_string(seed) + ")");
      Vec3 q, n_local;
      detail::sample_surface(prim, rng, q, n_local);
      const Vec3 p = mat3_apply(prim.R, q) + prim.T;
      if (prof.cull_hidden && dot(mat3_apply(prim.R, n_local), prof.camera - p) <= 0.0) continue;
      scene.cloud.points.push_back({snap9(p[0]), snap9(p[1]), snap9(p[2])});
      scene.cloud.object_id.push_back(static_cast<int>(k + 1));
      ++kept;
    }
  }
  const std::size_t plane_budget = prof.n_points - object_budget;
  for (std::size_t i = 0; i < plane_budget; ++i) {
    const double x = snap9(rng.uniform(-scene.plane_extent, scene.plane_extent));
    const double y = snap9(rng.uniform(-scene.plane_extent, scene.plane_extent));
    scene.cloud.points.push_back({x, y, 0.0});
    scene.cloud.object_id.push_back(0);
  }
  return scene;
}

}  // namespace granet
