#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "granet/grasp.hpp"
#include "granet/grasp_types.hpp"
#include "granet/scene.hpp"

namespace granet {

/// Parallel-jaw collision volume: two finger boxes flanking the closing region
/// and a connecting plate behind them. In the grasp frame (origin at the pose
/// translation, x = approach, y = closing) the fingers span x in
/// [tip_ahead - finger_length, tip_ahead]; the plate fills the next
/// back_clearance of depth behind them across the full opening.
struct GripperModel {
  double finger_thickness = 0.01;
  double finger_length = 0.06;
  double tip_ahead = 0.01;
  double back_clearance = 0.02;
  double height = 0.02;
  double contact_exclusion = 0.005;  // radius around contacts ignored by collision
};

/// True iff any cloud point outside the contact-exclusion balls lies strictly
/// inside the gripper volume at this pose.
inline bool collision_check(const PointCloud& cloud, const GraspPose& pose,
                            const GripperModel& grip, const std::vector<Vec3>& contacts = {}) {
  const double x_tip = grip.tip_ahead;
  const double x_back = grip.tip_ahead - grip.finger_length;
  const double x_plate = x_back - grip.back_clearance;
  const double half_w = pose.width / 2.0;
  const double half_h = grip.height / 2.0;
  const double y_out = half_w + grip.finger_thickness;
  const double reach = std::sqrt(std::max(x_tip * x_tip, x_plate * x_plate) + y_out * y_out +
                                 half_h * half_h);
  const double reach2 = reach * reach;
  const double excl2 = grip.contact_exclusion * grip.contact_exclusion;
  for (const Vec3& p : cloud.points) {
    if (sq_dist(p, pose.T) > reach2) continue;
    const Vec3 q = mat3_apply_transposed(pose.R, p - pose.T);
    if (std::abs(q[2]) >= half_h) continue;
    const double ay = std::abs(q[1]);
    bool inside = false;
    if (q[0] > x_back && q[0] < x_tip && ay > half_w && ay < y_out) inside = true;
    if (!inside && q[0] > x_plate && q[0] < x_back && ay < y_out) inside = true;
    if (!inside) continue;
    bool near_contact = false;
    for (const Vec3& c : contacts)
      if (sq_dist(p, c) <= excl2) {
        near_contact = true;
        break;
      }
    if (!near_contact) return true;
  }
  return false;
}

/// Finger contacts found by closing from an opening of 2*max_half_span centered
/// on `center` along the closing direction: the outermost surface crossing on
/// each side. mu is the friction coefficient both contacts need (max of the two
/// per-contact friction-cone demands).
struct ClosingContacts {
  bool valid = false;
  double mu = std::numeric_limits<double>::infinity();
  double width = 0.0;
  Vec3 contact_pos = {0, 0, 0};
  Vec3 contact_neg = {0, 0, 0};
};

inline ClosingContacts closing_contacts(const std::vector<Primitive>& primitives,
                                        const Vec3& center, const Vec3& closing_dir,
                                        double max_half_span) {
  std::vector<Crossing> crossings;
  for (const Primitive& prim : primitives) line_crossings(prim, center, closing_dir, crossings);
  ClosingContacts out;
  bool have_pos = false, have_neg = false;
  double t_pos = 0.0, t_neg = 0.0;
  Vec3 n_pos{0, 0, 0}, n_neg{0, 0, 0};
  for (const Crossing& c : crossings) {
    if (c.t > 0.0 && c.t <= max_half_span && (!have_pos || c.t > t_pos)) {
      have_pos = true;
      t_pos = c.t;
      n_pos = c.normal;
    }
    if (c.t < 0.0 && c.t >= -max_half_span && (!have_neg || c.t < t_neg)) {
      have_neg = true;
      t_neg = c.t;
      n_neg = c.normal;
    }
  }
  if (!have_pos || !have_neg) return out;
  // Push directions: -closing_dir at the + contact, +closing_dir at the - one;
  // the friction cone opens around the inward surface normal.
  const double cos_pos = dot(closing_dir, n_pos);
  const double cos_neg = -dot(closing_dir, n_neg);
  if (cos_pos <= 0.0 || cos_neg <= 0.0) return out;
  const auto demand = [](double c) {
    c = std::min(c, 1.0);
    return std::sqrt(std::max(0.0, 1.0 - c * c)) / c;
  };
  out.valid = true;
  out.mu = std::max(demand(cos_pos), demand(cos_neg));
  out.width = t_pos - t_neg;
  out.contact_pos = center + t_pos * closing_dir;
  out.contact_neg = center + t_neg * closing_dir;
  return out;
}

struct AnnotateConfig {
  double normal_alignment = -0.5;       // max dot(view, outward normal) for a candidate view
  std::size_t max_views_per_point = 12;
  double mu_max = 1.2;
};

/// Annotates every object surface point: for lattice views approaching against
/// the local normal and every (angle, depth) bin, finds finger contacts
/// analytically, scores s = (mu_max - mu_min)/mu_max, and keeps force-closure
/// (mu_min < mu_max), collision-free candidates. Deterministic; no sampling.
inline GraspAnnotationSet annotate_grasps(const SyntheticScene& scene, const ViewLattice& lattice,
                                          const GpgConfig& gpg, const GripperModel& grip,
                                          const AnnotateConfig& acfg = {}) {
  GraspAnnotationSet out;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const int id = scene.cloud.object_id[i];
    if (id <= 0) continue;
    const Primitive& prim = scene.primitives[static_cast<std::size_t>(id - 1)];
    const Vec3& p = scene.cloud.points[i];
    const Vec3 n = surface_normal(prim, p);
    cand.clear();
    for (std::size_t j = 0; j < lattice.size(); ++j) {
      const double align = dot(lattice.views[j], n);
      if (align <= acfg.normal_alignment) cand.emplace_back(align, j);
    }
    std::sort(cand.begin(), cand.end());
    if (cand.size() > acfg.max_views_per_point) cand.resize(acfg.max_views_per_point);

    for (const auto& [align, j] : cand) {
      const Vec3& view = lattice.views[j];
      for (std::size_t a = 0; a < gpg.angle_bins; ++a) {
        const double theta = gpg.bin_center_angle(a);
        const Mat3 R = assemble_rotation(view, theta);
        const Vec3 closing = mat3_col(R, 1);
        for (double depth : gpg.depth_bins) {
          const Vec3 center = p + depth * view;
          const ClosingContacts cc =
              closing_contacts(scene.primitives, center, closing, gpg.w_max / 2.0);
          if (!cc.valid || cc.mu >= acfg.mu_max) continue;
          GraspPose pose;
          pose.R = R;
          pose.T = center;
          pose.width = cc.width;
          pose.depth = depth;
          if (collision_check(scene.cloud, pose, grip, {cc.contact_pos, cc.contact_neg}))
            continue;
          GraspAnnotation ann;
          ann.approach = view;
          ann.angle = theta;
          ann.depth = depth;
          ann.width = cc.width;
          ann.mu_min = cc.mu;
          ann.score = (acfg.mu_max - cc.mu) / acfg.mu_max;
          out.per_point[i].push_back(ann);
        }
      }
    }
  }
  return out;
}

/// Independent re-check of a predicted pose against the analytic scene: finds
/// the contacts its closing line implies, the friction demand, and whether the
/// gripper collides with non-contact geometry.
struct OracleCheck {
  bool has_contacts = false;
  double mu_min = std::numeric_limits<double>::infinity();
  bool collision = false;
};

inline OracleCheck check_grasp(const SyntheticScene& scene, const GraspPose& pose, double w_max,
                               const GripperModel& grip) {
  OracleCheck r;
  const ClosingContacts cc =
      closing_contacts(scene.primitives, pose.T, mat3_col(pose.R, 1), w_max / 2.0);
  std::vector<Vec3> excl;
  if (cc.valid) {
    r.has_contacts = true;
    r.mu_min = cc.mu;
    excl = {cc.contact_pos, cc.contact_neg};
  }
  r.collision = collision_check(scene.cloud, pose, grip, excl);
  return r;
}

}  // namespace granet
