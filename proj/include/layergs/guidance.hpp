#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "layergs/body.hpp"
#include "layergs/camera.hpp"
#include "layergs/image.hpp"
#include "layergs/render.hpp"

namespace lgs {

/// Variance-preserving noise schedule: alpha_t^2 + sigma_t^2 = 1 at every
/// timestep, alpha decreasing, positive finite weights. Validated at
/// construction.
struct NoiseSchedule {
  int timesteps = 0;
  std::vector<double> alpha;
  std::vector<double> sigma;
  std::vector<double> weight;

  NoiseSchedule(int timesteps, std::vector<double> alpha,
                std::vector<double> sigma, std::vector<double> weight);

  /// Cosine alpha-bar schedule with weight sigma_t / alpha_t, which makes
  /// the mock-backend gradient exactly (c - target) at every timestep.
  static NoiseSchedule cosine(int timesteps = 1000);
};

struct SkeletonJoint {
  std::string name;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  bool on_screen = false;
};

/// Condition attached to one guidance query.
struct GuidanceContext {
  std::string prompt;
  std::vector<SkeletonJoint> skeleton;
  std::string camera_id;
};

/// Score estimator contract. Implementations must be deterministic for
/// fixed inputs and seed, and safe for concurrent calls.
class GuidanceBackend {
 public:
  virtual ~GuidanceBackend() = default;

  /// Predicted noise for the noised image c_t at timestep t; must return
  /// an image of identical shape.
  virtual Image predict_noise(const Image& noised, const GuidanceContext& ctx,
                              int t, const NoiseSchedule& schedule,
                              std::uint64_t seed) const = 0;
};

/// One reference view a mock backend reconstructs.
struct ReferenceView {
  std::string id;
  Camera camera;
  Image target;  // H x W x 3
};

/// Deterministic stand-in for the diffusion model: predicts
/// (c_t - alpha_t * target) / sigma_t for the view matching the context's
/// camera id, which turns the score-distillation gradient into
/// w_t * alpha_t / sigma_t * (c - target). Ignores prompt and skeleton.
class MockBackend : public GuidanceBackend {
 public:
  explicit MockBackend(std::vector<ReferenceView> views);

  Image predict_noise(const Image& noised, const GuidanceContext& ctx, int t,
                      const NoiseSchedule& schedule,
                      std::uint64_t seed) const override;

  const std::vector<ReferenceView>& views() const { return views_; }
  const Image& target(const std::string& camera_id) const;

 private:
  std::vector<ReferenceView> views_;
  std::map<std::string, std::size_t> by_id_;
};

std::unique_ptr<MockBackend> mock_backend(std::vector<ReferenceView> views);

struct SdsOptions {
  double t_min_frac = 0.02;
  double t_max_frac = 0.98;
};

/// Single-sample score-distillation gradient for one rendered image:
/// samples t and eps, noises the render, queries the backend and returns
/// w_t * (eps_hat - eps) as the per-pixel gradient of the color image.
struct SdsSample {
  Image grad;  // H x W x 3
  int t = 0;
};
SdsSample sds_grad(const RenderOutput& render, const GuidanceBackend& backend,
                   const GuidanceContext& ctx, const NoiseSchedule& schedule,
                   std::uint64_t seed, const SdsOptions& options = {});

/// Local + global score-distillation gradients for layer m, scaled by
/// lambda_local / lambda_global. Timestep and noise are sampled
/// independently for the two terms. Routing the global gradient to layer
/// m's parameters only is the optimizer's job (see pipeline).
struct DualSdsSample {
  Image grad_local;
  Image grad_global;
  int t_local = 0;
  int t_global = 0;
};
DualSdsSample dual_sds_grad(const RenderOutput& local,
                            const RenderOutput& global,
                            const GuidanceBackend& backend,
                            const GuidanceContext& ctx_local,
                            const GuidanceContext& ctx_global,
                            const NoiseSchedule& schedule, double lambda_local,
                            double lambda_global, std::uint64_t seed,
                            const SdsOptions& options = {});

/// Perspective projection of every body joint; joints behind the near
/// plane or outside the image are flagged off-screen.
std::vector<SkeletonJoint> project_skeleton(const ProxyBody& body,
                                            const Camera& camera);

}  // namespace lgs
