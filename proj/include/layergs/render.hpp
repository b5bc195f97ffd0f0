#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "layergs/camera.hpp"
#include "layergs/image.hpp"
#include "layergs/types.hpp"

namespace lgs {

/// All differentiable outputs of one render call.
struct RenderOutput {
  Image color;        // H x W x 3, in [0, 1]
  Image opacity_map;  // H x W, accumulated 1 - prod(1 - sigma)
  Image depth;        // H x W, opacity-weighted view depth
  Image alpha_mask;   // H x W, opacity_map >= mask_threshold
};

/// EWA-style screen-space footprint of one Gaussian.
struct ProjectedGaussian {
  Eigen::Vector2d mean2d;      // pixel coordinates
  Eigen::Matrix2d cov2d;       // pixel^2, includes the low-pass floor
  Eigen::Matrix2d cov2d_inv;
  double view_depth = 0.0;     // camera-space z of the center
  Eigen::Vector3d color;       // activated
  double alpha = 0.0;          // activated
  int source_index = -1;       // index into the input point set
};

struct RenderOptions {
  // Compositing stops once transmittance drops below this; the discarded
  // tail bounds the tile-vs-oracle difference, so the default sits well
  // under the 1e-5 equivalence tolerance even for deep opaque stacks.
  double early_stop_transmittance = 1e-6;
  double mask_threshold = 0.5;
  int tile_size = 16;
};

// Gaussians contribute only inside their 3-sigma ellipse; both the tile
// renderer and the oracle apply the identical cutoff.
inline constexpr double kCutoffMahalanobisSq = 9.0;
// Anti-aliasing floor added to the projected covariance diagonal (px^2).
inline constexpr double kLowpassFloor = 0.3;
// Guard for the opacity normalization in the depth map.
inline constexpr double kDepthEps = 1e-6;

/// Projects points into screen space. Points behind the near plane are
/// culled; output is sorted by view depth ascending, ties by input index.
std::vector<ProjectedGaussian> project(const std::vector<GaussianPoint>& points,
                                       const Camera& camera);

/// Per-pixel loss gradients fed into the backward pass. Empty images are
/// treated as zero; non-empty images must match the render resolution.
struct LossGrads {
  Image d_color;    // H x W x 3
  Image d_opacity;  // H x W
  Image d_depth;    // H x W
};

/// Per-point parameter gradients, index-aligned with the input point set.
/// Raw parameterization: d_log_scale and the logit gradients include the
/// activation jacobians; d_rotation is w.r.t. the unnormalized quaternion.
struct ParamGrads {
  std::vector<Eigen::Vector3d> d_center;
  std::vector<Eigen::Vector3d> d_log_scale;
  std::vector<Eigen::Vector4d> d_rotation;
  std::vector<Eigen::Vector3d> d_color_logit;
  std::vector<double> d_opacity_logit;

  void resize(std::size_t n);
  void set_zero();
};

/// One differentiable render: forward output plus the cached projection
/// needed by backward(). The point snapshot is immutable for the pass.
class ForwardPass {
 public:
  ForwardPass(PointSet points, const Camera& camera,
              const RenderOptions& options = {});

  const RenderOutput& output() const { return output_; }
  const Camera& camera() const { return camera_; }
  const PointSet& points() const { return points_; }

  /// Analytic gradients of sum(grads.d_* x output.*) w.r.t. every point
  /// parameter. `trainable`, when non-empty, masks which source points
  /// accumulate gradients (size must equal the point count). Shape
  /// mismatches throw std::invalid_argument.
  ParamGrads backward(const LossGrads& grads,
                      const std::vector<std::uint8_t>& trainable = {}) const;

 private:
  PointSet points_;
  Camera camera_;
  RenderOptions options_;
  std::vector<ProjectedGaussian> projected_;
  std::vector<std::vector<int>> tile_bins_;  // indices into projected_
  int tiles_x_ = 0, tiles_y_ = 0;
  RenderOutput output_;

  void run_forward();
};

/// Tile renderer, front-to-back alpha compositing.
RenderOutput render(const PointSet& points, const Camera& camera,
                    const RenderOptions& options = {});

/// O(N * pixels) reference renderer: no tiling, no early termination.
/// Ground truth for equivalence tests.
RenderOutput oracle_render(const PointSet& points, const Camera& camera,
                           const RenderOptions& options = {});

/// Local (layer m only) and global (layers 1..m) renders from one camera.
struct LayerPairRender {
  RenderOutput local;
  RenderOutput global;
};
LayerPairRender render_layer_pair(const LayeredAvatar& avatar, int m,
                                  const Camera& camera,
                                  const RenderOptions& options = {});

}  // namespace lgs
