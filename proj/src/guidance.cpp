#include "layergs/guidance.hpp"

#include <cmath>
#include <stdexcept>

#include "layergs/rng.hpp"

namespace lgs {

NoiseSchedule::NoiseSchedule(int timesteps_, std::vector<double> alpha_,
                             std::vector<double> sigma_,
                             std::vector<double> weight_)
    : timesteps(timesteps_),
      alpha(std::move(alpha_)),
      sigma(std::move(sigma_)),
      weight(std::move(weight_)) {
  if (timesteps < 1 || alpha.size() != static_cast<std::size_t>(timesteps) ||
      sigma.size() != alpha.size() || weight.size() != alpha.size()) {
    throw std::invalid_argument("NoiseSchedule: inconsistent array lengths");
  }
  for (int t = 0; t < timesteps; ++t) {
    const double vp = alpha[t] * alpha[t] + sigma[t] * sigma[t];
    if (std::fabs(vp - 1.0) > 1e-6) {
      throw std::invalid_argument(
          "NoiseSchedule: alpha^2 + sigma^2 != 1 at t=" + std::to_string(t));
    }
    if (t > 0 && alpha[t] > alpha[t - 1]) {
      throw std::invalid_argument("NoiseSchedule: alpha must be decreasing");
    }
    if (!(weight[t] >= 0.0) || !std::isfinite(weight[t])) {
      throw std::invalid_argument("NoiseSchedule: weights must be finite");
    }
  }
}

NoiseSchedule NoiseSchedule::cosine(int timesteps) {
  const double s = 0.008;
  auto f = [&](double t) {
    const double v = std::cos((t + s) / (1.0 + s) * M_PI / 2.0);
    return v * v;
  };
  const double f0 = f(0.0);
  std::vector<double> alpha(timesteps), sigma(timesteps), weight(timesteps);
  for (int t = 0; t < timesteps; ++t) {
    const double abar =
        std::min(1.0, f((t + 1.0) / timesteps) / f0);
    alpha[t] = std::sqrt(abar);
    sigma[t] = std::sqrt(1.0 - abar);
    weight[t] = sigma[t] / std::max(alpha[t], 1e-12);
  }
  return NoiseSchedule(timesteps, std::move(alpha), std::move(sigma),
                       std::move(weight));
}

MockBackend::MockBackend(std::vector<ReferenceView> views)
    : views_(std::move(views)) {
  if (views_.empty()) {
    throw std::invalid_argument("mock backend: reference set is empty");
  }
  for (std::size_t i = 0; i < views_.size(); ++i) {
    views_[i].camera.validate();
    if (views_[i].target.width() != views_[i].camera.width ||
        views_[i].target.height() != views_[i].camera.height ||
        views_[i].target.channels() != 3) {
      throw std::invalid_argument(
          "mock backend: target image does not match camera resolution");
    }
    by_id_[views_[i].id] = i;
  }
}

const Image& MockBackend::target(const std::string& camera_id) const {
  const auto it = by_id_.find(camera_id);
  if (it == by_id_.end()) {
    throw std::out_of_range("mock backend: unknown camera id '" + camera_id +
                            "'");
  }
  return views_[it->second].target;
}

Image MockBackend::predict_noise(const Image& noised,
                                 const GuidanceContext& ctx, int t,
                                 const NoiseSchedule& schedule,
                                 std::uint64_t /*seed*/) const {
  const Image& tgt = target(ctx.camera_id);
  if (!noised.same_shape(tgt)) {
    throw std::invalid_argument(
        "mock backend: noised image shape does not match the target");
  }
  const double a = schedule.alpha.at(static_cast<std::size_t>(t));
  const double s = schedule.sigma.at(static_cast<std::size_t>(t));
  Image out(noised.width(), noised.height(), noised.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.raw()[i] = (noised.raw()[i] - a * tgt.raw()[i]) / s;
  }
  return out;
}

std::unique_ptr<MockBackend> mock_backend(std::vector<ReferenceView> views) {
  return std::make_unique<MockBackend>(std::move(views));
}

SdsSample sds_grad(const RenderOutput& render, const GuidanceBackend& backend,
                   const GuidanceContext& ctx, const NoiseSchedule& schedule,
                   std::uint64_t seed, const SdsOptions& options) {
  const Image& c = render.color;
  if (c.empty() || c.channels() != 3) {
    throw std::invalid_argument("sds_grad: render has no color image");
  }
  Rng rng(seed);
  const int t_lo = static_cast<int>(std::ceil(options.t_min_frac *
                                              (schedule.timesteps - 1)));
  const int t_hi = static_cast<int>(std::floor(options.t_max_frac *
                                               (schedule.timesteps - 1)));
  const int t = static_cast<int>(rng.uniform_int(t_lo, std::max(t_lo, t_hi)));
  const double a = schedule.alpha[static_cast<std::size_t>(t)];
  const double s = schedule.sigma[static_cast<std::size_t>(t)];
  const double w = schedule.weight[static_cast<std::size_t>(t)];

  Image eps(c.width(), c.height(), 3);
  for (double& v : eps.raw()) v = rng.normal();

  Image noised(c.width(), c.height(), 3);
  for (std::size_t i = 0; i < noised.size(); ++i) {
    noised.raw()[i] = a * c.raw()[i] + s * eps.raw()[i];
  }

  Image predicted;
  try {
    predicted = backend.predict_noise(noised, ctx, t, schedule, seed);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("guidance backend failed (camera '") +
                             ctx.camera_id + "', t=" + std::to_string(t) +
                             "): " + e.what());
  }
  if (!predicted.same_shape(c)) {
    throw std::runtime_error("guidance backend returned a mismatched shape");
  }

  SdsSample out;
  out.t = t;
  out.grad = Image(c.width(), c.height(), 3);
  for (std::size_t i = 0; i < out.grad.size(); ++i) {
    out.grad.raw()[i] = w * (predicted.raw()[i] - eps.raw()[i]);
  }
  return out;
}

DualSdsSample dual_sds_grad(const RenderOutput& local,
                            const RenderOutput& global,
                            const GuidanceBackend& backend,
                            const GuidanceContext& ctx_local,
                            const GuidanceContext& ctx_global,
                            const NoiseSchedule& schedule, double lambda_local,
                            double lambda_global, std::uint64_t seed,
                            const SdsOptions& options) {
  if (lambda_local < 0.0 || lambda_global < 0.0) {
    throw std::invalid_argument("dual_sds_grad: lambdas must be >= 0");
  }
  DualSdsSample out;
  const int w = local.color.width(), h = local.color.height();
  out.grad_local = Image(w, h, 3);
  out.grad_global = Image(global.color.width(), global.color.height(), 3);
  if (lambda_local > 0.0) {
    SdsSample s = sds_grad(local, backend, ctx_local, schedule,
                           fold_seed(seed, 0), options);
    out.t_local = s.t;
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      out.grad_local.raw()[i] = lambda_local * s.grad.raw()[i];
    }
  }
  if (lambda_global > 0.0) {
    SdsSample s = sds_grad(global, backend, ctx_global, schedule,
                           fold_seed(seed, 1), options);
    out.t_global = s.t;
    for (std::size_t i = 0; i < s.grad.size(); ++i) {
      out.grad_global.raw()[i] = lambda_global * s.grad.raw()[i];
    }
  }
  return out;
}

std::vector<SkeletonJoint> project_skeleton(const ProxyBody& body,
                                            const Camera& camera) {
  camera.validate();
  std::vector<SkeletonJoint> out;
  out.reserve(body.joint_names().size());
  for (const auto& name : body.joint_names()) {
    SkeletonJoint j;
    j.name = name;
    Eigen::Vector2d uv;
    double depth = 0.0;
    if (camera.project(body.joint(name), &uv, &depth)) {
      j.pixel = uv;
      j.on_screen = uv.x() >= 0.0 && uv.x() < camera.width && uv.y() >= 0.0 &&
                    uv.y() < camera.height;
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace lgs
