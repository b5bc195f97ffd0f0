#pragma once

#include <Eigen/Dense>

namespace lgs {

/// Pinhole camera: position/look_at/up pose, vertical field of view,
/// integer resolution, near/far depth range. Camera space is x-right,
/// y-down, z-forward; pixel (u, v) has u growing rightward and v downward,
/// with the principal point at the image center.
struct Camera {
  Eigen::Vector3d position{0.0, 0.0, 5.0};
  Eigen::Vector3d look_at{0.0, 0.0, 0.0};
  Eigen::Vector3d up{0.0, 1.0, 0.0};
  double vertical_fov = 0.7853981633974483;  // 45 degrees
  int width = 128;
  int height = 128;
  double near = 0.01;
  double far = 100.0;

  /// Throws ConfigError when the pose or the frustum is degenerate.
  void validate() const;

  /// World-to-camera rotation (rows: right, down, forward).
  Eigen::Matrix3d world_to_camera() const;

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return world_to_camera() * (p_world - position);
  }

  /// Focal length in pixels (square pixels, set by the vertical fov).
  double focal_px() const;

  Eigen::Vector2d principal_point() const {
    return {0.5 * width, 0.5 * height};
  }

  /// Perspective projection. Returns false when the point is not in front
  /// of the near plane; uv/depth are filled only on success.
  bool project(const Eigen::Vector3d& p_world, Eigen::Vector2d* uv,
               double* depth) const;
};

}  // namespace lgs
