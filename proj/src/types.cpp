#include "layergs/types.hpp"

#include <cmath>
#include <stdexcept>

namespace lgs {

Eigen::Vector4d GaussianPoint::unit_rotation() const {
  const double n = rotation.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw std::domain_error("GaussianPoint: degenerate rotation quaternion");
  }
  return rotation / n;
}

Eigen::Matrix3d GaussianPoint::rotation_matrix() const {
  const Eigen::Vector4d q = unit_rotation();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d GaussianPoint::covariance() const {
  validate();
  const Eigen::Matrix3d r = rotation_matrix();
  const Eigen::Vector3d s2 = scale().array().square();
  return r * s2.asDiagonal() * r.transpose();
}

GaussianPoint GaussianPoint::from_activated(const Eigen::Vector3d& center,
                                            const Eigen::Vector3d& scale,
                                            const Eigen::Vector4d& rot,
                                            const Eigen::Vector3d& color,
                                            double opacity) {
  if (!center.allFinite() || !scale.allFinite() || !rot.allFinite() ||
      !color.allFinite() || !std::isfinite(opacity)) {
    throw std::domain_error("from_activated: non-finite input");
  }
  if ((scale.array() <= 0.0).any()) {
    throw std::domain_error("from_activated: scale must be positive");
  }
  if (std::fabs(rot.norm() - 1.0) > 1e-6) {
    throw std::domain_error("from_activated: rotation must be unit norm");
  }
  if ((color.array() < 0.0).any() || (color.array() > 1.0).any() ||
      opacity < 0.0 || opacity > 1.0) {
    throw std::domain_error("from_activated: color/opacity outside [0, 1]");
  }
  GaussianPoint p;
  p.center = center;
  p.log_scale = scale.array().log();
  p.rotation = rot / rot.norm();
  p.color_logit = {inverse_sigmoid(color[0]), inverse_sigmoid(color[1]),
                   inverse_sigmoid(color[2])};
  p.opacity_logit = inverse_sigmoid(opacity);
  return p;
}

void GaussianPoint::validate() const {
  if (!center.allFinite() || !log_scale.allFinite() || !rotation.allFinite() ||
      !color_logit.allFinite() || !std::isfinite(opacity_logit)) {
    throw std::domain_error("GaussianPoint: non-finite parameter");
  }
  if (rotation.norm() < 1e-12) {
    throw std::domain_error("GaussianPoint: degenerate rotation quaternion");
  }
}

PointSet PointSet::from_layer(const GaussianLayer& layer) {
  PointSet set;
  set.points = layer.points;
  set.refs.reserve(layer.points.size());
  for (std::size_t i = 0; i < layer.points.size(); ++i) {
    set.refs.push_back({layer.layer_index, static_cast<int>(i)});
  }
  return set;
}

PointSet LayeredAvatar::compose_prefix(int m) const {
  if (m < 1 || m > static_cast<int>(layers.size())) {
    throw std::out_of_range("compose_prefix: layer index " + std::to_string(m) +
                            " outside 1.." + std::to_string(layers.size()));
  }
  PointSet set;
  std::size_t total = 0;
  for (int j = 0; j < m; ++j) total += layers[j].points.size();
  set.points.reserve(total);
  set.refs.reserve(total);
  for (int j = 0; j < m; ++j) {
    const GaussianLayer& layer = layers[j];
    for (std::size_t i = 0; i < layer.points.size(); ++i) {
      set.points.push_back(layer.points[i]);
      set.refs.push_back({layer.layer_index, static_cast<int>(i)});
    }
  }
  return set;
}

const GaussianLayer& LayeredAvatar::layer(int m) const {
  for (const auto& l : layers) {
    if (l.layer_index == m) return l;
  }
  throw std::out_of_range("avatar has no layer " + std::to_string(m));
}

GaussianLayer& LayeredAvatar::layer(int m) {
  for (auto& l : layers) {
    if (l.layer_index == m) return l;
  }
  throw std::out_of_range("avatar has no layer " + std::to_string(m));
}

namespace {
// The volatile store blocks a gcc -O3 vectorizer transform that elides the
// narrowing cast pair, which must round to float precision.
double f32(double v) {
  volatile float narrowed = static_cast<float>(v);
  return static_cast<double>(narrowed);
}
}  // namespace

LayeredAvatar quantized_to_f32(const LayeredAvatar& avatar) {
  LayeredAvatar out = avatar;
  for (auto& layer : out.layers) {
    for (auto& p : layer.points) {
      for (int k = 0; k < 3; ++k) {
        p.center[k] = f32(p.center[k]);
        p.log_scale[k] = f32(p.log_scale[k]);
        p.color_logit[k] = f32(p.color_logit[k]);
      }
      for (int k = 0; k < 4; ++k) p.rotation[k] = f32(p.rotation[k]);
      p.opacity_logit = f32(p.opacity_logit);
    }
  }
  return out;
}

}  // namespace lgs
