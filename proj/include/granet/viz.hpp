#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "granet/grasp_types.hpp"
#include "granet/io.hpp"

namespace granet {

using Rgb = std::array<unsigned char, 3>;

/// Blue -> cyan -> yellow -> red ramp over t in [0, 1].
inline Rgb heat_color(double t) {
  t = std::min(1.0, std::max(0.0, t));
  const auto ch = [](double v) {
    return static_cast<unsigned char>(std::lround(255.0 * std::min(1.0, std::max(0.0, v))));
  };
  return Rgb{ch(1.5 - std::abs(4.0 * t - 3.0)), ch(1.5 - std::abs(4.0 * t - 2.0)),
             ch(1.5 - std::abs(4.0 * t - 1.0))};
}

inline constexpr Rgb kObjectColor{230, 110, 40};
inline constexpr Rgb kBackgroundColor{70, 90, 200};

/// Text PLY of colored points; optionally one named scalar per vertex.
inline void write_ply_points(const std::string& path, const std::vector<Vec3>& points,
                             const std::vector<Rgb>& colors,
                             const std::string& scalar_name = std::string(),
                             const std::vector<double>& scalar = {}) {
  if (colors.size() != points.size())
    throw std::invalid_argument("write_ply_points: one color per point required");
  const bool with_scalar = !scalar_name.empty();
  if (with_scalar && scalar.size() != points.size())
    throw std::invalid_argument("write_ply_points: one scalar per point required");
  std::ofstream f = detail::open_out(path);
  f << "ply\nformat ascii 1.0\n";
  f << "element vertex " << points.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (with_scalar) f << "property float " << scalar_name << "\n";
  f << "end_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    f << fmt9(points[i][0]) << ' ' << fmt9(points[i][1]) << ' ' << fmt9(points[i][2]) << ' '
      << static_cast<int>(colors[i][0]) << ' ' << static_cast<int>(colors[i][1]) << ' '
      << static_cast<int>(colors[i][2]);
    if (with_scalar) f << ' ' << fmt9(scalar[i]);
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

/// Text PLY of line segments (vertex + edge elements, colored edges).
inline void write_ply_segments(const std::string& path, const std::vector<Vec3>& vertices,
                               const std::vector<std::array<std::size_t, 2>>& edges,
                               const std::vector<Rgb>& edge_colors) {
  if (edge_colors.size() != edges.size())
    throw std::invalid_argument("write_ply_segments: one color per edge required");
  std::ofstream f = detail::open_out(path);
  f << "ply\nformat ascii 1.0\n";
  f << "element vertex " << vertices.size() << "\n";
  f << "property float x\nproperty float y\nproperty float z\n";
  f << "element edge " << edges.size() << "\n";
  f << "property int vertex1\nproperty int vertex2\n";
  f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  f << "end_header\n";
  for (const Vec3& v : vertices)
    f << fmt9(v[0]) << ' ' << fmt9(v[1]) << ' ' << fmt9(v[2]) << "\n";
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e][0] >= vertices.size() || edges[e][1] >= vertices.size())
      throw std::invalid_argument("write_ply_segments: edge references missing vertex");
    f << edges[e][0] << ' ' << edges[e][1] << ' ' << static_cast<int>(edge_colors[e][0]) << ' '
      << static_cast<int>(edge_colors[e][1]) << ' ' << static_cast<int>(edge_colors[e][2])
      << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

/// Grasp frames as segments: approach tail into the grasp center (blue), the
/// closing line between fingertip positions (green), a short lateral tick (red).
inline void write_ply_grasps(const std::string& path, const std::vector<GraspPose>& grasps,
                             double approach_length = 0.04, double tick_length = 0.01) {
  std::vector<Vec3> verts;
  std::vector<std::array<std::size_t, 2>> edges;
  std::vector<Rgb> colors;
  for (const GraspPose& g : grasps) {
    const Vec3 x = g.approach();
    const Vec3 y = g.closing_dir();
    const Vec3 z = mat3_col(g.R, 2);
    const std::size_t base = verts.size();
    verts.push_back(g.T - approach_length * x);
    verts.push_back(g.T);
    verts.push_back(g.T + (g.width / 2.0) * y);
    verts.push_back(g.T - (g.width / 2.0) * y);
    verts.push_back(g.T + tick_length * z);
    edges.push_back({base, base + 1});
    colors.push_back(Rgb{60, 90, 230});
    edges.push_back({base + 2, base + 3});
    colors.push_back(Rgb{60, 200, 90});
    edges.push_back({base + 1, base + 4});
    colors.push_back(Rgb{230, 70, 60});
  }
  write_ply_segments(path, verts, edges, colors);
}

}  // namespace granet
