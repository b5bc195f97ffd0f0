#include "layergs/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "layergs/asset.hpp"
#include "layergs/errors.hpp"
#include "layergs/image_io.hpp"
#include "layergs/losses.hpp"

namespace lgs {

namespace {

constexpr double kDegToRad = M_PI / 180.0;

double cosine_decay(int iter, int total) {
  if (total <= 1) return 1.0;
  return 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(iter) /
                               static_cast<double>(total)));
}

/// Accumulates pass gradients into per-layer buffers using the point
/// back-references, dropping frozen attributes at the layer boundary.
void route_gradients(std::map<int, ParamGrads>& accums,
                     const ParamGrads& grads, const PointSet& set,
                     const LayeredAvatar& avatar) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const PointRef ref = set.refs[i];
    auto it = accums.find(ref.layer_index);
    if (it == accums.end()) continue;
    const FrozenFlags& frozen = avatar.layer(ref.layer_index).frozen;
    ParamGrads& acc = it->second;
    const auto pi = static_cast<std::size_t>(ref.point_index);
    if (!frozen.center) acc.d_center[pi] += grads.d_center[i];
    if (!frozen.scale) acc.d_log_scale[pi] += grads.d_log_scale[i];
    if (!frozen.rotation) acc.d_rotation[pi] += grads.d_rotation[i];
    if (!frozen.color) acc.d_color_logit[pi] += grads.d_color_logit[i];
    if (!frozen.opacity) acc.d_opacity_logit[pi] += grads.d_opacity_logit[i];
  }
}

bool all_zero(const ParamGrads& g) {
  for (const auto& v : g.d_center) {
    if (!v.isZero(0.0)) return false;
  }
  for (const auto& v : g.d_log_scale) {
    if (!v.isZero(0.0)) return false;
  }
  for (const auto& v : g.d_rotation) {
    if (!v.isZero(0.0)) return false;
  }
  for (const auto& v : g.d_color_logit) {
    if (!v.isZero(0.0)) return false;
  }
  for (const double v : g.d_opacity_logit) {
    if (v != 0.0) return false;
  }
  return true;
}

struct DivergenceBox {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
};

DivergenceBox divergence_box(const ProxyBody& body) {
  Eigen::Vector3d lo, hi;
  body.bounds(&lo, &hi);
  const Eigen::Vector3d c = 0.5 * (lo + hi);
  const Eigen::Vector3d half = 0.5 * (hi - lo) * 10.0;
  return {c - half, c + half};
}

void check_divergence(const GaussianLayer& layer, const DivergenceBox& box,
                      const std::string& where) {
  for (std::size_t i = 0; i < layer.points.size(); ++i) {
    const auto& c = layer.points[i].center;
    if (!c.allFinite() || (c.array() < box.min.array()).any() ||
        (c.array() > box.max.array()).any()) {
      throw DivergenceError(
          where + ": center of point " + std::to_string(i) + " in layer " +
          std::to_string(layer.layer_index) +
          " left the 10x body bounding box (" + std::to_string(c.x()) + ", " +
          std::to_string(c.y()) + ", " + std::to_string(c.z()) + ")");
    }
  }
}

Image scaled(const Image& img, double s) {
  Image out = img;
  for (double& v : out.raw()) v *= s;
  return out;
}

}  // namespace

Camera rig_camera(const RigSpec& rig, const ProxyBody& body,
                  double azimuth_rad, double elevation_rad) {
  Camera cam;
  const Eigen::Vector3d center = body.center();
  const double radius = rig.radius_factor * body.height();
  cam.position =
      center + radius * Eigen::Vector3d(
                            std::sin(azimuth_rad) * std::cos(elevation_rad),
                            std::sin(elevation_rad),
                            std::cos(azimuth_rad) * std::cos(elevation_rad));
  cam.look_at = center;
  cam.up = {0.0, 1.0, 0.0};
  cam.vertical_fov = rig.fov_deg * kDegToRad;
  cam.width = rig.width;
  cam.height = rig.height;
  return cam;
}

GaussianLayer densify_perturb(const GaussianLayer& layer, std::uint64_t seed,
                              const DensifyNoise& noise) {
  if (layer.points.empty()) {
    throw std::invalid_argument("densify_perturb: layer is empty");
  }
  Rng rng(seed);
  GaussianLayer out = layer;
  out.points.reserve(layer.points.size() * 2);
  for (const GaussianPoint& src : layer.points) {
    GaussianPoint dup = src;
    if (noise.center_bound > 0.0) {
      for (int k = 0; k < 3; ++k) {
        dup.center[k] += rng.uniform(-noise.center_bound, noise.center_bound);
      }
    }
    if (noise.color_hi > noise.color_lo) {
      for (int k = 0; k < 3; ++k) {
        const double c = sigmoid(dup.color_logit[k]);
        const double shifted =
            std::min(c + rng.uniform(noise.color_lo, noise.color_hi), 1.0);
        dup.color_logit[k] = inverse_sigmoid(shifted);
      }
    }
    out.points.push_back(dup);
  }
  return out;
}

void apply_frozen(ParamGrads& grads, const FrozenFlags& frozen) {
  if (frozen.center) {
    std::fill(grads.d_center.begin(), grads.d_center.end(),
              Eigen::Vector3d::Zero().eval());
  }
  if (frozen.scale) {
    std::fill(grads.d_log_scale.begin(), grads.d_log_scale.end(),
              Eigen::Vector3d::Zero().eval());
  }
  if (frozen.rotation) {
    std::fill(grads.d_rotation.begin(), grads.d_rotation.end(),
              Eigen::Vector4d::Zero().eval());
  }
  if (frozen.color) {
    std::fill(grads.d_color_logit.begin(), grads.d_color_logit.end(),
              Eigen::Vector3d::Zero().eval());
  }
  if (frozen.opacity) {
    std::fill(grads.d_opacity_logit.begin(), grads.d_opacity_logit.end(), 0.0);
  }
}

AdamOptimizer::AdamOptimizer(AttributeLearningRates lr, double beta1,
                             double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(GaussianLayer& layer, const ParamGrads& grads,
                         double lr_scale) {
  const std::size_t n = layer.points.size();
  if (grads.d_center.size() != n) {
    throw std::invalid_argument("AdamOptimizer: gradient size mismatch");
  }
  if (m_.d_center.size() < n) {
    // Densification grows the layer; fresh points start with zero moments.
    const std::size_t old = m_.d_center.size();
    auto grow = [&](auto& mv, auto zero) {
      mv.resize(n, zero);
    };
    (void)old;
    grow(m_.d_center, Eigen::Vector3d::Zero().eval());
    grow(v_.d_center, Eigen::Vector3d::Zero().eval());
    grow(m_.d_log_scale, Eigen::Vector3d::Zero().eval());
    grow(v_.d_log_scale, Eigen::Vector3d::Zero().eval());
    grow(m_.d_rotation, Eigen::Vector4d::Zero().eval());
    grow(v_.d_rotation, Eigen::Vector4d::Zero().eval());
    grow(m_.d_color_logit, Eigen::Vector3d::Zero().eval());
    grow(v_.d_color_logit, Eigen::Vector3d::Zero().eval());
    m_.d_opacity_logit.resize(n, 0.0);
    v_.d_opacity_logit.resize(n, 0.0);
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, steps_);
  const double bc2 = 1.0 - std::pow(beta2_, steps_);

  auto update = [&](double& param, double g, double& m, double& v, double lr) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    param -= lr * lr_scale * mhat / (std::sqrt(vhat) + eps_);
  };

  const FrozenFlags& frozen = layer.frozen;
  for (std::size_t i = 0; i < n; ++i) {
    GaussianPoint& p = layer.points[i];
    if (!frozen.center) {
      for (int k = 0; k < 3; ++k) {
        update(p.center[k], grads.d_center[i][k], m_.d_center[i][k],
               v_.d_center[i][k], lr_.center);
      }
    }
    if (!frozen.scale) {
      for (int k = 0; k < 3; ++k) {
        update(p.log_scale[k], grads.d_log_scale[i][k], m_.d_log_scale[i][k],
               v_.d_log_scale[i][k], lr_.scale);
      }
    }
    if (!frozen.rotation) {
      for (int k = 0; k < 4; ++k) {
        update(p.rotation[k], grads.d_rotation[i][k], m_.d_rotation[i][k],
               v_.d_rotation[i][k], lr_.rotation);
      }
    }
    if (!frozen.color) {
      for (int k = 0; k < 3; ++k) {
        update(p.color_logit[k], grads.d_color_logit[i][k],
               m_.d_color_logit[i][k], v_.d_color_logit[i][k], lr_.color);
      }
    }
    if (!frozen.opacity) {
      update(p.opacity_logit, grads.d_opacity_logit[i], m_.d_opacity_logit[i],
             v_.d_opacity_logit[i], lr_.opacity);
    }
  }
}

Generator::Generator(ProxyBody body, const GuidanceBackend& backend,
                     GeneratorOptions options,
                     std::vector<ReferenceView> reference_rig)
    : body_(std::move(body)),
      backend_(backend),
      options_(std::move(options)),
      reference_rig_(std::move(reference_rig)),
      schedule_(NoiseSchedule::cosine(options_.schedule_timesteps)) {
  for (const auto& view : reference_rig_) view.camera.validate();
}

Generator::StepCameras Generator::pick_cameras(Rng& rng, int count) const {
  StepCameras out;
  if (!reference_rig_.empty()) {
    // Mock guidance can only answer for known views, so the batch is drawn
    // from the reference rig (distinct views while possible).
    std::vector<std::size_t> pool(reference_rig_.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    for (int k = 0; k < count; ++k) {
      if (pool.empty()) {
        for (std::size_t i = 0; i < reference_rig_.size(); ++i) {
          pool.push_back(i);
        }
      }
      const auto pick = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1));
      const std::size_t idx = pool[pick];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      out.cameras.push_back(reference_rig_[idx].camera);
      out.ids.push_back(reference_rig_[idx].id);
    }
    return out;
  }
  for (int k = 0; k < count; ++k) {
    const double az = rng.uniform(0.0, 2.0 * M_PI);
    const double el = rng.uniform(options_.rig.elevation_lo_deg * kDegToRad,
                                  options_.rig.elevation_hi_deg * kDegToRad);
    out.cameras.push_back(rig_camera(options_.rig, body_, az, el));
    out.ids.push_back("sampled_" + std::to_string(k));
  }
  return out;
}

void Generator::generate_layer(LayeredAvatar& avatar, int m,
                               const LayerSpec& spec) {
  if (m < 1 || m != static_cast<int>(avatar.layers.size()) + 1) {
    throw ConfigError("generate_layer: layers must be generated in order; "
                      "expected layer " +
                      std::to_string(avatar.layers.size() + 1));
  }

  // Sparse initialization: sample the expanded body surface, keep points
  // inside the garment's joint box.
  const double offset = 0.01 * (m - 1);
  const std::uint64_t init_seed = fold_seed(spec.coarse.seed, 0xABCDEF);
  std::vector<Eigen::Vector3d> samples =
      sample_surface(body_, spec.init.point_count, offset, init_seed);
  if (!spec.init.box_joints.empty()) {
    const JointBox box =
        joint_box(body_, spec.init.box_joints, spec.init.box_padding);
    samples = filter_points(samples, box);
    if (samples.empty()) {
      std::string names;
      for (const auto& j : box.source_joints) names += j + " ";
      throw ConfigError(
          "generate_layer: joint-box filter removed every sampled point "
          "(box joints: " + names + ", padding " +
          std::to_string(box.padding) + ")");
    }
  }

  GaussianLayer layer;
  layer.layer_index = m;
  layer.prompt = spec.prompt;
  layer.points.reserve(samples.size());
  for (const auto& c : samples) {
    GaussianPoint p;
    p.center = c;
    p.log_scale = Eigen::Vector3d::Constant(std::log(0.02));
    p.rotation = {1.0, 0.0, 0.0, 0.0};
    p.color_logit = Eigen::Vector3d::Zero();           // mid-gray
    p.opacity_logit = inverse_sigmoid(0.7);
    layer.points.push_back(p);
  }
  avatar.layers.push_back(std::move(layer));
  if (m == 1 && avatar.body_prompt.empty()) avatar.body_prompt = spec.prompt;

  run_stage(avatar, m, spec, /*coarse=*/true);
  write_checkpoint(avatar, m, "coarse");
  run_stage(avatar, m, spec, /*coarse=*/false);
  write_checkpoint(avatar, m, "fine");
}

void Generator::run_stage(LayeredAvatar& avatar, int m, const LayerSpec& spec,
                          bool coarse) {
  const StageConfig& cfg = coarse ? spec.coarse : spec.fine;
  if (cfg.iterations < 0) throw ConfigError("stage iterations must be >= 0");
  AdamOptimizer opt(cfg.lr);
  const DivergenceBox dbox = divergence_box(body_);

  // Densification rounds are spaced evenly through the fine stage.
  std::vector<int> densify_at;
  if (!coarse && cfg.densify_rounds > 0) {
    for (int r = 0; r < cfg.densify_rounds; ++r) {
      densify_at.push_back(
          static_cast<int>(static_cast<long long>(cfg.iterations) * r /
                           cfg.densify_rounds));
    }
  }

  const std::string global_prompt =
      avatar.body_prompt + ", wearing " + spec.prompt;

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    for (std::size_t r = 0; r < densify_at.size(); ++r) {
      if (densify_at[r] == iter) {
        avatar.layer(m) = densify_perturb(
            avatar.layer(m), fold_seed(cfg.seed, 0x0D0D0000ULL + r));
      }
    }
    GaussianLayer& lay = avatar.layer(m);

    Rng rng(fold_seed(cfg.seed, 0xCA000000ULL + static_cast<std::uint64_t>(iter)));
    const StepCameras batch = pick_cameras(rng, cfg.cameras_per_step);

    // Per-layer gradient accumulators; inner layers must stay exactly zero.
    std::map<int, ParamGrads> accums;
    for (const auto& l : avatar.layers) {
      accums[l.layer_index].resize(l.points.size());
    }

    double density_value = 0.0;
    for (std::size_t k = 0; k < batch.cameras.size(); ++k) {
      const Camera& cam = batch.cameras[k];
      const std::uint64_t cam_seed =
          fold_seed(cfg.seed, 0x5D500000ULL +
                                  static_cast<std::uint64_t>(iter) * 131 + k);
      GuidanceContext ctx_local{spec.prompt, project_skeleton(body_, cam),
                                batch.ids[k]};

      ForwardPass local_fp(PointSet::from_layer(lay), cam, options_.render);
      Image grad_local;
      if (m == 1) {
        SdsSample s = sds_grad(local_fp.output(), backend_, ctx_local,
                               schedule_, cam_seed, options_.sds);
        grad_local = scaled(s.grad, cfg.weights.lambda_local);
      }

      std::optional<ForwardPass> global_fp;
      Image grad_global;
      if (m > 1) {
        GuidanceContext ctx_global{global_prompt, ctx_local.skeleton,
                                   batch.ids[k]};
        global_fp.emplace(avatar.compose_prefix(m), cam, options_.render);
        DualSdsSample dual = dual_sds_grad(
            local_fp.output(), global_fp->output(), backend_, ctx_local,
            ctx_global, schedule_, cfg.weights.lambda_local,
            cfg.weights.lambda_global, cam_seed, options_.sds);
        grad_local = std::move(dual.grad_local);
        grad_global = std::move(dual.grad_global);
      }

      LossGrads lg;
      lg.d_color = std::move(grad_local);
      if (coarse && cfg.weights.lambda_density > 0.0) {
        const MaskImage mask = synth_mask(local_fp.output());
        LossResult dens = density_loss(local_fp.output().opacity_map, mask);
        density_value += dens.value;
        lg.d_opacity = scaled(dens.grad, cfg.weights.lambda_density);
      }
      route_gradients(accums, local_fp.backward(lg),
                      local_fp.points(), avatar);

      if (global_fp) {
        // Eq-style routing: only the target layer's parameters receive the
        // global gradient; inner layers are part of the scene but not of
        // the optimized parameter set.
        const PointSet& gset = global_fp->points();
        std::vector<std::uint8_t> trainable(gset.size(), 0);
        for (std::size_t i = 0; i < gset.size(); ++i) {
          trainable[i] = gset.refs[i].layer_index == m ? 1 : 0;
        }
        LossGrads glg;
        glg.d_color = std::move(grad_global);
        route_gradients(accums, global_fp->backward(glg, trainable), gset,
                        avatar);
      }
    }
    if (!batch.cameras.empty()) {
      density_value /= static_cast<double>(batch.cameras.size());
    }

    // Contract check: generating layer m must not touch inner layers.
    for (const auto& [idx, acc] : accums) {
      if (idx != m && !all_zero(acc)) {
        throw std::logic_error(
            "generate_layer: nonzero gradient routed to inner layer " +
            std::to_string(idx));
      }
    }

    opt.step(lay, accums.at(m), cosine_decay(iter, cfg.iterations));
    check_divergence(lay, dbox, "generate_layer");

    if (on_step) {
      StepEvent ev;
      ev.layer_index = m;
      ev.coarse_stage = coarse;
      ev.iteration = iter;
      ev.layer_grads = &accums;
      ev.avatar = &avatar;
      ev.density_loss_value = density_value;
      on_step(ev);
    }
    if (options_.checkpoint_every > 0 && !options_.checkpoint_dir.empty() &&
        (iter + 1) % options_.checkpoint_every == 0) {
      write_checkpoint(avatar, m,
                       (coarse ? "coarse_" : "fine_") + std::to_string(iter + 1));
    }
  }
}

void Generator::write_checkpoint(const LayeredAvatar& avatar, int m,
                                 const std::string& tag) const {
  if (options_.checkpoint_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(options_.checkpoint_dir);
  const std::string base =
      options_.checkpoint_dir + "/layer" + std::to_string(m) + "_" + tag;
  save_asset(base + ".gsa", avatar);

  // Turntable strip of the composed avatar.
  const int views = std::max(1, options_.turntable_views);
  const RigSpec& rig = options_.rig;
  Image strip(rig.width * views, rig.height, 3);
  for (int v = 0; v < views; ++v) {
    const double az = 2.0 * M_PI * v / views;
    const Camera cam = rig_camera(rig, body_, az, 10.0 * kDegToRad);
    const RenderOutput out =
        render(avatar.compose_prefix(static_cast<int>(avatar.layers.size())),
               cam, options_.render);
    for (int y = 0; y < rig.height; ++y) {
      for (int x = 0; x < rig.width; ++x) {
        for (int c = 0; c < 3; ++c) {
          strip.at(y, v * rig.width + x, c) = out.color.at(y, x, c);
        }
      }
    }
  }
  write_png(base + ".png", strip);
}

TransferResult transfer_garment(const GaussianLayer& source_layer,
                                const LayeredAvatar& target_avatar,
                                const ProxyBody& target_body,
                                const TransferConfig& config,
                                const RenderOptions& render_options,
                                const RigSpec& rig) {
  if (target_avatar.layers.empty()) {
    throw ConfigError("transfer_garment: target avatar has no generated body");
  }
  for (const auto& p : source_layer.points) p.validate();
  if (source_layer.points.empty()) {
    throw ConfigError("transfer_garment: source garment is empty");
  }

  TransferResult result;
  result.layer = source_layer;
  GaussianLayer& garment = result.layer;

  // Fixed deterministic camera ring; the similarity loss compares depth
  // maps across iterations, so the views must not move.
  std::vector<Camera> cameras;
  for (int v = 0; v < std::max(1, config.cameras); ++v) {
    const double az = 2.0 * M_PI * v / std::max(1, config.cameras);
    cameras.push_back(rig_camera(rig, target_body, az, 10.0 * kDegToRad));
  }

  // The target avatar is detached: render its depth and mask once.
  std::vector<Image> d_av, dbar;
  std::vector<MaskImage> m_av;
  const PointSet target_points =
      target_avatar.compose_prefix(static_cast<int>(target_avatar.layers.size()));
  for (const Camera& cam : cameras) {
    const RenderOutput out = render(target_points, cam, render_options);
    d_av.push_back(out.depth);
    m_av.push_back(synth_mask(out, MaskImage::Source::avatar_opacity));
    const RenderOutput gout =
        render(PointSet::from_layer(garment), cam, render_options);
    dbar.push_back(gout.depth);  // pre-transfer depth, captured once
  }

  const DivergenceBox dbox = divergence_box(target_body);

  // The hinge compares garment depth against occluder depth, which only
  // exists where the avatar actually covers the pixel; beyond the avatar
  // silhouette the background depth is 0 and the comparison is
  // meaningless. The visibility mask is therefore the overlap M_m & M_av.
  auto vis_mask = [](const MaskImage& mm, const MaskImage& mav) {
    MaskImage out = mm;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      out.values.raw()[i] = mm.values.raw()[i] != 0.0 &&
                                    mav.values.raw()[i] != 0.0
                                ? 1.0
                                : 0.0;
    }
    return out;
  };

  auto evaluate = [&](TransferMetrics* metrics, bool initial) {
    double fit = 0.0, vis = 0.0, sim = 0.0;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      const RenderOutput out =
          render(PointSet::from_layer(garment), cameras[v], render_options);
      const MaskImage mm = synth_mask(out);
      fit += human_fitting_loss(d_av[v], out.depth, m_av[v], mm).value;
      vis += visibility_loss(d_av[v], out.depth, vis_mask(mm, m_av[v]),
                             config.delta_occ)
                 .value;
      sim += ssim(out.depth, dbar[v]).value;
    }
    const double n = static_cast<double>(cameras.size());
    if (initial) {
      metrics->initial_fitting = fit / n;
      metrics->initial_visibility = vis / n;
    } else {
      metrics->final_fitting = fit / n;
      metrics->final_visibility = vis / n;
      metrics->final_similarity = sim / n;
    }
  };
  evaluate(&result.metrics, /*initial=*/true);

  const FrozenFlags frozen = FrozenFlags::transfer();
  for (int iter = 0; iter < config.iterations; ++iter) {
    ParamGrads accum;
    accum.resize(garment.points.size());
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      ForwardPass fp(PointSet::from_layer(garment), cameras[v], render_options);
      const MaskImage mm = synth_mask(fp.output());
      const LossResult lf =
          human_fitting_loss(d_av[v], fp.output().depth, m_av[v], mm);
      const LossResult ls = similarity_loss(fp.output().depth, dbar[v]);
      const LossResult lv = visibility_loss(
          d_av[v], fp.output().depth, vis_mask(mm, m_av[v]), config.delta_occ);

      LossGrads lg;
      lg.d_depth = Image(fp.output().depth.width(), fp.output().depth.height(), 1);
      for (std::size_t i = 0; i < lg.d_depth.size(); ++i) {
        lg.d_depth.raw()[i] = config.lambda_fitting * lf.grad.raw()[i] +
                              config.lambda_similarity * ls.grad.raw()[i] +
                              config.lambda_visibility * lv.grad.raw()[i];
      }
      ParamGrads g = fp.backward(lg);
      apply_frozen(g, frozen);
      for (std::size_t i = 0; i < garment.points.size(); ++i) {
        accum.d_center[i] += g.d_center[i];
        accum.d_log_scale[i] += g.d_log_scale[i];
      }
    }

    // Plain gradient descent: at an already-fitted equilibrium the
    // gradients vanish and the garment genuinely stays put, which an
    // adaptive optimizer's unit-scaled steps would not guarantee.
    const double lr_scale =
        cosine_decay(iter, config.iterations) / static_cast<double>(cameras.size());
    for (std::size_t i = 0; i < garment.points.size(); ++i) {
      garment.points[i].center -=
          config.lr_center * lr_scale * accum.d_center[i];
      garment.points[i].log_scale -=
          config.lr_scale * lr_scale * accum.d_log_scale[i];
    }
    check_divergence(garment, dbox, "transfer_garment");
  }

  evaluate(&result.metrics, /*initial=*/false);
  return result;
}

}  // namespace lgs
