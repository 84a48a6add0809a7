#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace granet {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}
inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) throw std::invalid_argument("normalized: zero vector");
  return (1.0 / n) * a;
}

/// Scene points with optional per-point object ids (0 = background plane) and normals.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<int> object_id;   // empty when unlabeled
  std::vector<Vec3> normals;    // empty when absent

  std::size_t size() const { return points.size(); }
  bool has_labels() const { return !object_id.empty(); }
  bool has_normals() const { return !normals.empty(); }

  PointCloud subset(const std::vector<std::size_t>& idx) const {
    PointCloud out;
    out.points.reserve(idx.size());
    for (auto i : idx) out.points.push_back(points[i]);
    if (has_labels()) {
      out.object_id.reserve(idx.size());
      for (auto i : idx) out.object_id.push_back(object_id[i]);
    }
    if (has_normals()) {
      out.normals.reserve(idx.size());
      for (auto i : idx) out.normals.push_back(normals[i]);
    }
    return out;
  }
};

}  // namespace granet
