#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace lgs {

/// Capsule around the segment joint_a -> joint_b.
struct Bone {
  std::string joint_a;
  std::string joint_b;
  double radius = 0.05;  // canonical; scaled by girth_scale
};

struct ProxyShape {
  double height_scale = 1.0;
  double girth_scale = 1.0;
};

/// Capsule-skeleton stand-in for a parametric human body: named joints on
/// a tree rooted at the pelvis, one capsule per bone. height_scale scales
/// joint positions (and with them bone lengths); girth_scale scales radii.
class ProxyBody {
 public:
  /// Roughly human proportions, ~1.7 units tall at unit scales, T-pose,
  /// y-up with feet near y=0.
  static ProxyBody default_body(const ProxyShape& shape = {});

  const ProxyShape& shape() const { return shape_; }

  /// Joint names in fixed canonical order.
  const std::vector<std::string>& joint_names() const { return names_; }

  /// Effective (scaled) joint position; throws std::out_of_range with the
  /// name when unknown.
  Eigen::Vector3d joint(const std::string& name) const;

  const std::vector<Bone>& bones() const { return bones_; }
  double bone_radius(const Bone& b) const {
    return b.radius * shape_.girth_scale;
  }

  /// Signed distance from p to the capsule union surface (< 0 inside).
  double signed_distance(const Eigen::Vector3d& p) const;

  /// Distance from p to the nearest bone segment (the skeleton itself).
  double distance_to_skeleton(const Eigen::Vector3d& p) const;

  /// Axis-aligned bounds of the capsule union.
  void bounds(Eigen::Vector3d* lo, Eigen::Vector3d* hi) const;

  double height() const;
  Eigen::Vector3d center() const;

 private:
  ProxyShape shape_;
  std::vector<std::string> names_;
  std::vector<Eigen::Vector3d> canonical_;  // unscaled joint positions
  std::vector<Bone> bones_;

  int index_of(const std::string& name) const;
};

/// Axis-aligned box around a set of joints, expanded by padding.
struct JointBox {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
  std::vector<std::string> source_joints;
  double padding = 0.0;

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

/// n points approximately uniform by area over the exposed capsule-union
/// surface, displaced outward along the local normal by layer_offset.
/// Deterministic for a fixed seed.
std::vector<Eigen::Vector3d> sample_surface(const ProxyBody& body, int n,
                                            double layer_offset,
                                            std::uint64_t seed);

/// Box of the named joints' positions padded on every face; throws
/// std::out_of_range for unknown names.
JointBox joint_box(const ProxyBody& body,
                   const std::vector<std::string>& joints, double padding);

/// Subset of points inside the box, order preserved.
std::vector<Eigen::Vector3d> filter_points(
    const std::vector<Eigen::Vector3d>& points, const JointBox& box);

/// Joint lists for the garment-type presets (upper/lower/full/hair);
/// throws ConfigError for an unknown preset name.
std::vector<std::string> garment_preset_joints(const std::string& preset);

}  // namespace lgs
