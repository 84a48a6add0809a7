#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "granet/graph.hpp"
#include "granet/pointcloud.hpp"

namespace granet {

using Mat3 = std::array<std::array<double, 3>, 3>;  // row-major rotation

inline Mat3 mat3_identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

inline Mat3 mat3_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

inline Vec3 mat3_apply(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Vec3 mat3_apply_transposed(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
          m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
          m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2]};
}

inline Vec3 mat3_col(const Mat3& m, int j) { return {m[0][j], m[1][j], m[2][j]}; }

/// Rodrigues rotation about a unit axis.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {{{t * x * x + c, t * x * y - s * z, t * x * z + s * y},
           {t * x * y + s * z, t * y * y + c, t * y * z - s * x},
           {t * x * z - s * y, t * y * z + s * x, t * z * z + c}}};
}

/// Geodesic angle between two rotations.
inline double rotation_angle(const Mat3& a, const Mat3& b) {
  double tr = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) tr += a[k][i] * b[k][i];  // trace(A^T B)
  const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

/// Minimal rotation taking +x to `approach` (fallback axis +y when approach = -x),
/// composed with a roll about the approach axis. The first column equals `approach`.
inline Mat3 assemble_rotation(const Vec3& approach, double in_plane_angle) {
  const double len = norm(approach);
  if (std::abs(len - 1.0) > 1e-6)
    throw std::invalid_argument("assemble_rotation: approach must be unit length");
  const Vec3 xhat{1.0, 0.0, 0.0};
  Mat3 align;
  const double c = approach[0];  // dot(xhat, approach)
  Vec3 axis = cross(xhat, approach);
  const double s = norm(axis);
  if (s < 1e-12) {
    align = c > 0.0 ? mat3_identity() : axis_angle({0.0, 1.0, 0.0}, std::numbers::pi);
  } else {
    align = axis_angle((1.0 / s) * axis, std::atan2(s, c));
  }
  const Mat3 roll = axis_angle(xhat, in_plane_angle);
  return mat3_mul(align, roll);
}

/// Approach-direction lattice: V approximately uniform unit vectors on the sphere.
struct ViewLattice {
  std::vector<Vec3> views;
  std::size_t size() const { return views.size(); }

  /// Index of the lattice vector with the largest dot product (ties -> lower index).
  std::size_t nearest(const Vec3& dir) const {
    std::size_t best = 0;
    double best_dot = dot(views[0], dir);
    for (std::size_t i = 1; i < views.size(); ++i) {
      const double d = dot(views[i], dir);
      if (d > best_dot) {
        best_dot = d;
        best = i;
      }
    }
    return best;
  }
};

/// Golden-angle spiral over the full sphere; deterministic in V.
inline ViewLattice fibonacci_viewpoints(std::size_t v_count) {
  if (v_count < 1) throw std::invalid_argument("fibonacci_viewpoints: V must be >= 1");
  ViewLattice lat;
  lat.views.reserve(v_count);
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < v_count; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(v_count);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    lat.views.push_back(normalized(Vec3{r * std::cos(phi), r * std::sin(phi), z}));
  }
  return lat;
}

struct CylinderCrop {
  std::vector<Vec3> points;  // grasp frame, scaled by 1/radius
  bool empty = false;        // no scene point fell inside the cylinder
};

/// Keeps points with axial coordinate t = (q - center) . approach in [depth_lo, depth_hi]
/// and radial distance <= radius, expressed in the grasp frame (center at origin,
/// approach = +x) and scaled by 1/radius. Exactly max_points are returned: FPS-subsampled
/// when over, padded with the first kept point when under. An empty crop yields a single
/// zero point with the empty flag set.
inline CylinderCrop cylinder_crop(const std::vector<Vec3>& cloud, const Vec3& center,
                                  const Vec3& approach, double radius, double depth_lo,
                                  double depth_hi, std::size_t max_points) {
  if (!(radius > 0.0)) throw std::invalid_argument("cylinder_crop: radius must be positive");
  if (!(depth_lo < depth_hi))
    throw std::invalid_argument("cylinder_crop: depth_lo must be < depth_hi");
  const Mat3 frame = assemble_rotation(normalized(approach), 0.0);
  CylinderCrop out;
  std::vector<Vec3> kept;
  for (const Vec3& q : cloud) {
    const Vec3 local = mat3_apply_transposed(frame, q - center);  // x = axial coordinate
    const double t = local[0];
    if (t < depth_lo || t > depth_hi) continue;
    const double r2 = local[1] * local[1] + local[2] * local[2];
    if (r2 > radius * radius) continue;
    kept.push_back((1.0 / radius) * local);
  }
  if (kept.empty()) {
    out.points.push_back({0.0, 0.0, 0.0});
    out.empty = true;
    return out;
  }
  if (kept.size() > max_points) {
    const auto idx = farthest_point_sampling(kept, max_points, 0);
    out.points.reserve(max_points);
    for (auto i : idx) out.points.push_back(kept[i]);
  } else {
    out.points = std::move(kept);
    while (out.points.size() < max_points) out.points.push_back(out.points.front());
  }
  return out;
}

}  // namespace granet
