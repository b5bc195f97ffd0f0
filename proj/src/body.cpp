#include "layergs/body.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "layergs/errors.hpp"
#include "layergs/rng.hpp"

namespace lgs {

namespace {

double point_segment_distance(const Eigen::Vector3d& p,
                              const Eigen::Vector3d& a,
                              const Eigen::Vector3d& b) {
  const Eigen::Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 < 1e-18) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

ProxyBody ProxyBody::default_body(const ProxyShape& shape) {
  if (!(shape.height_scale > 0.0) || !(shape.girth_scale > 0.0)) {
    throw ConfigError("proxy body: shape scales must be positive");
  }
  ProxyBody b;
  b.shape_ = shape;
  auto add = [&b](const std::string& name, double x, double y, double z) {
    b.names_.push_back(name);
    b.canonical_.emplace_back(x, y, z);
  };
  add("pelvis", 0.0, 1.00, 0.0);
  add("spine", 0.0, 1.25, 0.0);
  add("neck", 0.0, 1.45, 0.0);
  add("head", 0.0, 1.60, 0.0);
  add("l_shoulder", 0.20, 1.42, 0.0);
  add("r_shoulder", -0.20, 1.42, 0.0);
  add("l_elbow", 0.46, 1.42, 0.0);
  add("r_elbow", -0.46, 1.42, 0.0);
  add("l_wrist", 0.72, 1.42, 0.0);
  add("r_wrist", -0.72, 1.42, 0.0);
  add("l_hip", 0.10, 0.95, 0.0);
  add("r_hip", -0.10, 0.95, 0.0);
  add("l_knee", 0.11, 0.52, 0.0);
  add("r_knee", -0.11, 0.52, 0.0);
  add("l_ankle", 0.12, 0.09, 0.0);
  add("r_ankle", -0.12, 0.09, 0.0);

  // Tree rooted at the pelvis.
  b.bones_ = {
      {"pelvis", "spine", 0.11},    {"spine", "neck", 0.10},
      {"neck", "head", 0.085},      {"neck", "l_shoulder", 0.055},
      {"neck", "r_shoulder", 0.055},{"l_shoulder", "l_elbow", 0.045},
      {"r_shoulder", "r_elbow", 0.045}, {"l_elbow", "l_wrist", 0.038},
      {"r_elbow", "r_wrist", 0.038},{"pelvis", "l_hip", 0.085},
      {"pelvis", "r_hip", 0.085},   {"l_hip", "l_knee", 0.068},
      {"r_hip", "r_knee", 0.068},   {"l_knee", "l_ankle", 0.052},
      {"r_knee", "r_ankle", 0.052},
  };
  return b;
}

int ProxyBody::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw std::out_of_range("proxy body: unknown joint '" + name + "'");
}

Eigen::Vector3d ProxyBody::joint(const std::string& name) const {
  return canonical_[index_of(name)] * shape_.height_scale;
}

double ProxyBody::signed_distance(const Eigen::Vector3d& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const Bone& b : bones_) {
    const double seg = point_segment_distance(p, joint(b.joint_a), joint(b.joint_b));
    d = std::min(d, seg - bone_radius(b));
  }
  return d;
}

double ProxyBody::distance_to_skeleton(const Eigen::Vector3d& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const Bone& b : bones_) {
    d = std::min(d, point_segment_distance(p, joint(b.joint_a), joint(b.joint_b)));
  }
  return d;
}

void ProxyBody::bounds(Eigen::Vector3d* lo, Eigen::Vector3d* hi) const {
  Eigen::Vector3d mn = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d mx = -mn;
  for (const Bone& b : bones_) {
    const double r = bone_radius(b);
    for (const auto& j : {joint(b.joint_a), joint(b.joint_b)}) {
      mn = mn.cwiseMin(j - Eigen::Vector3d::Constant(r));
      mx = mx.cwiseMax(j + Eigen::Vector3d::Constant(r));
    }
  }
  if (lo) *lo = mn;
  if (hi) *hi = mx;
}

double ProxyBody::height() const {
  Eigen::Vector3d lo, hi;
  bounds(&lo, &hi);
  return hi.y() - lo.y();
}

Eigen::Vector3d ProxyBody::center() const {
  Eigen::Vector3d lo, hi;
  bounds(&lo, &hi);
  return 0.5 * (lo + hi);
}

std::vector<Eigen::Vector3d> sample_surface(const ProxyBody& body, int n,
                                            double layer_offset,
                                            std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_surface: n must be >= 1");
  if (layer_offset < 0.0) {
    throw std::invalid_argument("sample_surface: layer_offset must be >= 0");
  }
  const auto& bones = body.bones();

  // Area-weighted capsule choice: lateral 2*pi*r*L plus spherical caps
  // 4*pi*r^2 per capsule.
  std::vector<double> cum;
  cum.reserve(bones.size());
  double total = 0.0;
  for (const Bone& b : bones) {
    const double r = body.bone_radius(b);
    const double len = (body.joint(b.joint_b) - body.joint(b.joint_a)).norm();
    total += 2.0 * M_PI * r * len + 4.0 * M_PI * r * r;
    cum.push_back(total);
  }

  Rng rng(seed);
  std::vector<Eigen::Vector3d> out;
  out.reserve(n);
  const double tol = 1e-9;
  std::size_t guard = 0;
  const std::size_t guard_max = static_cast<std::size_t>(n) * 100000 + 1000000;
  while (out.size() < static_cast<std::size_t>(n)) {
    if (++guard > guard_max) {
      throw std::runtime_error("sample_surface: rejection sampling stalled");
    }
    const double pick = rng.uniform() * total;
    std::size_t bi = 0;
    while (bi + 1 < cum.size() && cum[bi] <= pick) ++bi;
    const Bone& bone = bones[bi];
    const double r = body.bone_radius(bone);
    const Eigen::Vector3d a = body.joint(bone.joint_a);
    const Eigen::Vector3d b = body.joint(bone.joint_b);
    const Eigen::Vector3d axis = b - a;
    const double len = axis.norm();
    const Eigen::Vector3d dir = len > 1e-12 ? (axis / len).eval()
                                            : Eigen::Vector3d(0, 1, 0);

    const double lateral = 2.0 * M_PI * r * len;
    const double caps = 4.0 * M_PI * r * r;
    Eigen::Vector3d point, normal;
    if (rng.uniform() * (lateral + caps) < lateral) {
      // Cylinder side: uniform along the axis and around it.
      const double t = rng.uniform();
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      Eigen::Vector3d e1 = dir.cross(Eigen::Vector3d(0, 0, 1));
      if (e1.norm() < 1e-6) e1 = dir.cross(Eigen::Vector3d(1, 0, 0));
      e1.normalize();
      const Eigen::Vector3d e2 = dir.cross(e1);
      normal = std::cos(phi) * e1 + std::sin(phi) * e2;
      point = a + t * axis + r * normal;
    } else {
      // Caps: uniform sphere direction attached to the matching end.
      const double z = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      Eigen::Vector3d e1 = dir.cross(Eigen::Vector3d(0, 0, 1));
      if (e1.norm() < 1e-6) e1 = dir.cross(Eigen::Vector3d(1, 0, 0));
      e1.normalize();
      const Eigen::Vector3d e2 = dir.cross(e1);
      normal = rho * std::cos(phi) * e1 + rho * std::sin(phi) * e2 + z * dir;
      point = (z >= 0.0 ? b : a) + r * normal;
    }

    const Eigen::Vector3d displaced = point + layer_offset * normal;
    // Keep only samples whose distance to the whole union equals the
    // offset, i.e. the displaced point is not swallowed by another capsule.
    if (body.signed_distance(displaced) >= layer_offset - tol) {
      out.push_back(displaced);
    }
  }
  return out;
}

JointBox joint_box(const ProxyBody& body,
                   const std::vector<std::string>& joints, double padding) {
  if (joints.empty()) {
    throw std::invalid_argument("joint_box: need at least one joint");
  }
  Eigen::Vector3d mn = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d mx = -mn;
  for (const auto& name : joints) {
    const Eigen::Vector3d j = body.joint(name);  // throws on unknown name
    mn = mn.cwiseMin(j);
    mx = mx.cwiseMax(j);
  }
  JointBox box;
  box.min = mn - Eigen::Vector3d::Constant(padding);
  box.max = mx + Eigen::Vector3d::Constant(padding);
  box.source_joints = joints;
  box.padding = padding;
  return box;
}

std::vector<Eigen::Vector3d> filter_points(
    const std::vector<Eigen::Vector3d>& points, const JointBox& box) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (box.contains(p)) out.push_back(p);
  }
  return out;
}

std::vector<std::string> garment_preset_joints(const std::string& preset) {
  if (preset == "upper") {
    return {"neck", "spine", "pelvis", "l_shoulder", "r_shoulder",
            "l_elbow", "r_elbow"};
  }
  if (preset == "lower") {
    return {"pelvis", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle",
            "r_ankle"};
  }
  if (preset == "full") {
    return ProxyBody::default_body().joint_names();
  }
  if (preset == "hair") {
    return {"head", "neck"};
  }
  throw ConfigError("unknown garment preset '" + preset + "'");
}

}  // namespace lgs
