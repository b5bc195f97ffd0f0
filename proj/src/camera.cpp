#include "layergs/camera.hpp"

#include <cmath>

#include "layergs/errors.hpp"

namespace lgs {

void Camera::validate() const {
  if (!position.allFinite() || !look_at.allFinite() || !up.allFinite()) {
    throw ConfigError("camera: non-finite pose");
  }
  if (!(near > 0.0) || !(near < far)) {
    throw ConfigError("camera: require 0 < near < far");
  }
  if (!(vertical_fov > 0.0) || !(vertical_fov < M_PI)) {
    throw ConfigError("camera: fov must lie in (0, pi)");
  }
  if (width < 1 || height < 1) {
    throw ConfigError("camera: resolution must be at least 1x1");
  }
  const Eigen::Vector3d dir = look_at - position;
  if (dir.norm() < 1e-12) {
    throw ConfigError("camera: position equals look_at");
  }
  if (dir.normalized().cross(up.normalized()).norm() < 1e-9) {
    throw ConfigError("camera: view direction parallel to up");
  }
}

Eigen::Matrix3d Camera::world_to_camera() const {
  const Eigen::Vector3d forward = (look_at - position).normalized();
  const Eigen::Vector3d right = forward.cross(up.normalized()).normalized();
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d w;
  w.row(0) = right;
  w.row(1) = down;
  w.row(2) = forward;
  return w;
}

double Camera::focal_px() const {
  return 0.5 * height / std::tan(0.5 * vertical_fov);
}

bool Camera::project(const Eigen::Vector3d& p_world, Eigen::Vector2d* uv,
                     double* depth) const {
  const Eigen::Vector3d p = to_camera(p_world);
  if (p.z() <= near) return false;
  const double f = focal_px();
  const Eigen::Vector2d c = principal_point();
  if (uv) *uv = {f * p.x() / p.z() + c.x(), f * p.y() / p.z() + c.y()};
  if (depth) *depth = p.z();
  return true;
}

}  // namespace lgs
