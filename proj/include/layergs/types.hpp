#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace lgs {

// Color and opacity are stored pre-activation (sigmoid at read time) and
// scale pre-activation (exp at read time), so gradient steps cannot leave
// the valid range. Logits are clamped to +-kLogitClamp; sigmoid(+-40)
// saturates to exactly 1.0 / dwarfs below DBL_EPSILON, so activated values
// still cover the closed interval [0, 1].
inline constexpr double kLogitClamp = 40.0;

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

/// Inverse sigmoid; input clamped into (0, 1), output into +-kLogitClamp.
inline double inverse_sigmoid(double y) {
  const double v = std::log(y / (1.0 - y));  // +-inf at the endpoints
  return std::clamp(v, -kLogitClamp, kLogitClamp);
}

/// One anisotropic 3D Gaussian. Raw fields are the optimization variables;
/// activated views (scale, color, opacity, unit rotation) satisfy the
/// documented invariants by construction.
struct GaussianPoint {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};  // quaternion (w, x, y, z)
  Eigen::Vector3d color_logit = Eigen::Vector3d::Zero();
  double opacity_logit = 0.0;

  Eigen::Vector3d scale() const { return log_scale.array().exp(); }
  Eigen::Vector3d color() const {
    return {sigmoid(color_logit[0]), sigmoid(color_logit[1]),
            sigmoid(color_logit[2])};
  }
  double opacity() const { return sigmoid(opacity_logit); }

  /// Unit quaternion; throws std::domain_error if the raw vector is not
  /// normalizable.
  Eigen::Vector4d unit_rotation() const;

  /// Rotation matrix of unit_rotation().
  Eigen::Matrix3d rotation_matrix() const;

  /// Sigma = R diag(scale^2) R^T. Symmetric positive definite by
  /// construction. Throws std::domain_error on non-finite inputs.
  Eigen::Matrix3d covariance() const;

  /// Builds a point from activated values. scale must be positive finite,
  /// rot unit-norm within 1e-6, color/opacity in [0, 1].
  static GaussianPoint from_activated(const Eigen::Vector3d& center,
                                      const Eigen::Vector3d& scale,
                                      const Eigen::Vector4d& rot,
                                      const Eigen::Vector3d& color,
                                      double opacity);

  /// Throws std::domain_error if any raw field is non-finite or the
  /// rotation is degenerate.
  void validate() const;
};

/// Sigma_i of a point; free-function spelling of GaussianPoint::covariance.
inline Eigen::Matrix3d covariance_of(const GaussianPoint& p) {
  return p.covariance();
}

/// Which attributes are excluded from optimization.
struct FrozenFlags {
  bool center = false;
  bool scale = false;
  bool rotation = false;
  bool color = false;
  bool opacity = false;

  /// Garment-transfer contract: only position and scale move.
  static FrozenFlags transfer() { return {false, false, true, true, true}; }
};

/// One component of the avatar: an ordered set of Gaussians plus metadata.
struct GaussianLayer {
  std::vector<GaussianPoint> points;
  int layer_index = 1;  // 1 is the body; garments are >= 2
  std::string prompt;
  FrozenFlags frozen;
};

/// Back-reference from a composed point to its (layer, index) home, so
/// gradients can be routed to the owning layer only.
struct PointRef {
  int layer_index = 0;
  int point_index = 0;
};

/// Flat, immutable snapshot of points handed to the renderer.
struct PointSet {
  std::vector<GaussianPoint> points;
  std::vector<PointRef> refs;

  std::size_t size() const { return points.size(); }

  static PointSet from_layer(const GaussianLayer& layer);
};

/// Ordered stack of layers; layer 1 is the body, garments sit above it.
struct LayeredAvatar {
  std::vector<GaussianLayer> layers;
  std::string body_prompt;

  /// Concatenation of the points of layers 1..m in layer order, with
  /// back-references. Throws std::out_of_range unless 1 <= m <= layers.
  PointSet compose_prefix(int m) const;

  /// Layer with layer_index == m; throws std::out_of_range if absent.
  const GaussianLayer& layer(int m) const;
  GaussianLayer& layer(int m);
};

/// Round-trips every raw parameter through 32-bit floats, the asset
/// format's numeric width. load(save(a)) equals quantized(a) bit-exactly.
LayeredAvatar quantized_to_f32(const LayeredAvatar& avatar);

}  // namespace lgs
