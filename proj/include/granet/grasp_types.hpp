#pragma once

#include <map>
#include <vector>

#include "granet/geometry.hpp"
#include "granet/pointcloud.hpp"

namespace granet {

/// A 6-DoF parallel-jaw grasp: full pose plus jaw width, approach depth and a
/// predicted or annotated quality score.
struct GraspPose {
  Mat3 R = mat3_identity();  // first column = approach direction
  Vec3 T = {0, 0, 0};
  double width = 0.0;
  double depth = 0.0;
  double score = 0.0;

  Vec3 approach() const { return mat3_col(R, 0); }
  Vec3 closing_dir() const { return mat3_col(R, 1); }
};

/// One annotated grasp candidate at a surface point.
struct GraspAnnotation {
  Vec3 approach = {1, 0, 0};  // unit, from the view lattice
  double angle = 0.0;         // in-plane rotation, [0, pi)
  double depth = 0.0;
  double width = 0.0;
  double mu_min = 0.0;  // minimum friction coefficient achieving force closure
  double score = 0.0;   // (1.2 - mu_min) / 1.2
};

/// Annotations keyed by cloud point index; iteration order is deterministic.
struct GraspAnnotationSet {
  std::map<std::size_t, std::vector<GraspAnnotation>> per_point;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [idx, list] : per_point) n += list.size();
    return n;
  }
};

}  // namespace granet
