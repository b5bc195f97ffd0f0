#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layergs/body.hpp"
#include "layergs/guidance.hpp"
#include "layergs/render.hpp"
#include "layergs/rng.hpp"
#include "layergs/types.hpp"

namespace lgs {

struct AttributeLearningRates {
  double center = 1.6e-4;
  double scale = 5e-3;
  double rotation = 1e-3;
  double color = 1e-2;
  double opacity = 5e-2;
};

struct GenerationWeights {
  double lambda_local = 1.0;
  double lambda_global = 1.0;
  double lambda_density = 1.0;  // coarse stage only
};

struct StageConfig {
  int iterations = 0;
  AttributeLearningRates lr;
  GenerationWeights weights;
  int densify_rounds = 0;  // fine stage
  int cameras_per_step = 2;
  std::uint64_t seed = 0;
};

/// Sparse initialization of one layer: point budget before the joint-box
/// filter, and the box definition. An empty joint list keeps every sample
/// (the body layer); garment layers focus on a joint box.
struct LayerInit {
  int point_count = 5000;
  std::vector<std::string> box_joints;  // empty -> no filter
  double box_padding = 0.1;
};

struct LayerSpec {
  std::string prompt;
  LayerInit init;
  StageConfig coarse;
  StageConfig fine;
};

/// Transfer optimizes centers and scales only; the other attributes have
/// no learning rate by construction.
struct TransferConfig {
  int iterations = 400;
  double lr_center = 2.0;
  double lr_scale = 0.2;
  double lambda_fitting = 1.0;
  double lambda_similarity = 1.0;
  double lambda_visibility = 1.0;
  double delta_occ = 0.03;
  int cameras = 8;
  std::uint64_t seed = 0;
};

/// Random-view sampling around the body: uniform azimuth, elevation in
/// [-15, 30] degrees, radius proportional to body height, aimed at the
/// body center.
struct RigSpec {
  double radius_factor = 2.5;
  double elevation_lo_deg = -15.0;
  double elevation_hi_deg = 30.0;
  double fov_deg = 45.0;
  int width = 128;
  int height = 128;
};

Camera rig_camera(const RigSpec& rig, const ProxyBody& body,
                  double azimuth_rad, double elevation_rad);

/// Center noise bounds and additive color noise range used when a layer is
/// duplicated for densification.
struct DensifyNoise {
  double center_bound = 5e-4;
  double color_lo = 0.0;
  double color_hi = 0.05;
};

/// Appends a perturbed duplicate of every point: center noise uniform in
/// [-bound, bound] per component, color noise uniform in [lo, hi] added to
/// the activated color and clamped to [0, 1]. Exactly doubles the count;
/// the source points are preserved verbatim. Zero bounds give bit-exact
/// duplicates.
GaussianLayer densify_perturb(const GaussianLayer& layer, std::uint64_t seed,
                              const DensifyNoise& noise = {});

/// Zeroes gradient components of frozen attributes.
void apply_frozen(ParamGrads& grads, const FrozenFlags& frozen);

/// Adam with per-attribute learning rates. Moment arrays grow with the
/// layer on densification (new points start with zero moments).
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AttributeLearningRates lr, double beta1 = 0.9,
                         double beta2 = 0.999, double eps = 1e-8);

  void step(GaussianLayer& layer, const ParamGrads& grads, double lr_scale);

 private:
  AttributeLearningRates lr_;
  double beta1_, beta2_, eps_;
  int steps_ = 0;
  ParamGrads m_, v_;
};

/// Per-step observer payload: per-layer accumulated gradients for the step
/// (inner layers must stay exactly zero) and the avatar being built.
struct StepEvent {
  int layer_index = 0;
  bool coarse_stage = false;
  int iteration = 0;
  const std::map<int, ParamGrads>* layer_grads = nullptr;
  const LayeredAvatar* avatar = nullptr;
  double density_loss_value = 0.0;
};

struct GeneratorOptions {
  RenderOptions render;
  RigSpec rig;
  SdsOptions sds;
  int schedule_timesteps = 1000;
  std::string checkpoint_dir;  // empty -> no checkpoints
  int checkpoint_every = 0;
  int turntable_views = 8;
};

/// Layer-by-layer generation driver: sparse initialization, coarse stage
/// with density guidance, fine stage with recurrent perturbed
/// densification; dual score-distillation throughout (plain for the body
/// layer). Gradients are routed to the target layer only.
class Generator {
 public:
  Generator(ProxyBody body, const GuidanceBackend& backend,
            GeneratorOptions options,
            std::vector<ReferenceView> reference_rig = {});

  /// Builds layer m (appending it) from spec; layers 1..m-1 must exist and
  /// are left bit-unchanged. Throws ConfigError when the joint-box filter
  /// empties the initialization, DivergenceError when centers escape.
  void generate_layer(LayeredAvatar& avatar, int m, const LayerSpec& spec);

  std::function<void(const StepEvent&)> on_step;

  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  ProxyBody body_;
  const GuidanceBackend& backend_;
  GeneratorOptions options_;
  std::vector<ReferenceView> reference_rig_;
  NoiseSchedule schedule_;

  struct StepCameras {
    std::vector<Camera> cameras;
    std::vector<std::string> ids;
  };
  StepCameras pick_cameras(Rng& rng, int count) const;

  void run_stage(LayeredAvatar& avatar, int m, const LayerSpec& spec,
                 bool coarse);
  void write_checkpoint(const LayeredAvatar& avatar, int m,
                        const std::string& tag) const;
};

struct TransferMetrics {
  double initial_fitting = 0.0;
  double final_fitting = 0.0;
  double initial_visibility = 0.0;
  double final_visibility = 0.0;
  double final_similarity = 0.0;  // SSIM(d_m, d_m_before), mean over views
};

struct TransferResult {
  GaussianLayer layer;
  TransferMetrics metrics;
};

/// Re-fits a garment layer onto a different avatar by gradient descent on
/// centers and scales under the fitting/similarity/visibility losses.
/// Rotation, color and opacity are bit-unchanged. The target avatar's own
/// layers are the detached occluders. Throws DivergenceError if any center
/// leaves 10x the target body bounds.
TransferResult transfer_garment(const GaussianLayer& source_layer,
                                const LayeredAvatar& target_avatar,
                                const ProxyBody& target_body,
                                const TransferConfig& config,
                                const RenderOptions& render_options = {},
                                const RigSpec& rig = {});

}  // namespace lgs
