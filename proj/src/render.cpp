#include "layergs/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "layergs/parallel.hpp"

namespace lgs {

namespace {

struct Contributor {
  int entry;            // position in the tile bin
  double sigma;
  double gauss;         // G value at the pixel
  double t_before;      // transmittance in front of this gaussian
  Eigen::Vector2d lam_delta;  // cov2d_inv * (pixel - mean2d)
};

// Per-gaussian gradients in screen space, accumulated per tile and merged
// in fixed tile order so results do not depend on the worker count.
struct Grad2D {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  double cov00 = 0.0, cov01 = 0.0, cov11 = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double alpha = 0.0;
  double z = 0.0;

  void add(const Grad2D& o) {
    mean2d += o.mean2d;
    cov00 += o.cov00;
    cov01 += o.cov01;
    cov11 += o.cov11;
    color += o.color;
    alpha += o.alpha;
    z += o.z;
  }
};

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& p_cam,
                                                double f) {
  const double z = p_cam.z();
  Eigen::Matrix<double, 2, 3> j;
  j << f / z, 0.0, -f * p_cam.x() / (z * z),
       0.0, f / z, -f * p_cam.y() / (z * z);
  return j;
}

}  // namespace

std::vector<ProjectedGaussian> project(const std::vector<GaussianPoint>& points,
                                       const Camera& camera) {
  camera.validate();
  const Eigen::Matrix3d w = camera.world_to_camera();
  const double f = camera.focal_px();
  const Eigen::Vector2d c0 = camera.principal_point();

  std::vector<ProjectedGaussian> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const GaussianPoint& p = points[i];
    const Eigen::Vector3d p_cam = w * (p.center - camera.position);
    if (p_cam.z() <= camera.near) continue;  // culled

    ProjectedGaussian g;
    g.source_index = static_cast<int>(i);
    g.view_depth = p_cam.z();
    g.mean2d = {f * p_cam.x() / p_cam.z() + c0.x(),
                f * p_cam.y() / p_cam.z() + c0.y()};

    const Eigen::Matrix<double, 2, 3> j = projection_jacobian(p_cam, f);
    const Eigen::Matrix<double, 2, 3> m = j * w;
    Eigen::Matrix2d cov = m * p.covariance() * m.transpose();
    cov(0, 0) += kLowpassFloor;
    cov(1, 1) += kLowpassFloor;
    g.cov2d = cov;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    Eigen::Matrix2d inv;
    inv << cov(1, 1), -cov(0, 1), -cov(1, 0), cov(0, 0);
    g.cov2d_inv = inv / det;
    g.color = p.color();
    g.alpha = p.opacity();
    out.push_back(g);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
                     if (a.view_depth != b.view_depth) {
                       return a.view_depth < b.view_depth;
                     }
                     return a.source_index < b.source_index;
                   });
  return out;
}

void ParamGrads::resize(std::size_t n) {
  d_center.resize(n);
  d_log_scale.resize(n);
  d_rotation.resize(n);
  d_color_logit.resize(n);
  d_opacity_logit.resize(n);
  set_zero();
}

void ParamGrads::set_zero() {
  std::fill(d_center.begin(), d_center.end(), Eigen::Vector3d::Zero().eval());
  std::fill(d_log_scale.begin(), d_log_scale.end(),
            Eigen::Vector3d::Zero().eval());
  std::fill(d_rotation.begin(), d_rotation.end(),
            Eigen::Vector4d::Zero().eval());
  std::fill(d_color_logit.begin(), d_color_logit.end(),
            Eigen::Vector3d::Zero().eval());
  std::fill(d_opacity_logit.begin(), d_opacity_logit.end(), 0.0);
}

ForwardPass::ForwardPass(PointSet points, const Camera& camera,
                         const RenderOptions& options)
    : points_(std::move(points)), camera_(camera), options_(options) {
  camera_.validate();
  projected_ = project(points_.points, camera_);

  const int ts = options_.tile_size;
  tiles_x_ = (camera_.width + ts - 1) / ts;
  tiles_y_ = (camera_.height + ts - 1) / ts;
  tile_bins_.assign(static_cast<std::size_t>(tiles_x_) * tiles_y_, {});

  // Bin by the axis-aligned bounds of the 3-sigma ellipse. Iterating the
  // depth-sorted list keeps every bin depth-sorted too.
  for (std::size_t k = 0; k < projected_.size(); ++k) {
    const ProjectedGaussian& g = projected_[k];
    const double rx = 3.0 * std::sqrt(g.cov2d(0, 0));
    const double ry = 3.0 * std::sqrt(g.cov2d(1, 1));
    const int x0 = std::max(0, static_cast<int>(std::floor(g.mean2d.x() - rx)));
    const int x1 = std::min(camera_.width - 1,
                            static_cast<int>(std::ceil(g.mean2d.x() + rx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(g.mean2d.y() - ry)));
    const int y1 = std::min(camera_.height - 1,
                            static_cast<int>(std::ceil(g.mean2d.y() + ry)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / ts; ty <= y1 / ts; ++ty) {
      for (int tx = x0 / ts; tx <= x1 / ts; ++tx) {
        tile_bins_[static_cast<std::size_t>(ty) * tiles_x_ + tx].push_back(
            static_cast<int>(k));
      }
    }
  }
  run_forward();
}

void ForwardPass::run_forward() {
  const int w = camera_.width, h = camera_.height, ts = options_.tile_size;
  output_.color = Image(w, h, 3);
  output_.opacity_map = Image(w, h, 1);
  output_.depth = Image(w, h, 1);
  output_.alpha_mask = Image(w, h, 1);
  const double early = options_.early_stop_transmittance;

  parallel_for(tile_bins_.size(), [&](std::size_t tile) {
    const auto& bin = tile_bins_[tile];
    const int tx = static_cast<int>(tile) % tiles_x_;
    const int ty = static_cast<int>(tile) / tiles_x_;
    const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
    const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const Eigen::Vector2d pix(x + 0.5, y + 0.5);
        double t = 1.0;
        Eigen::Vector3d color = Eigen::Vector3d::Zero();
        double acc_a = 0.0, acc_z = 0.0;
        for (const int k : bin) {
          const ProjectedGaussian& g = projected_[k];
          const Eigen::Vector2d d = pix - g.mean2d;
          const double m2 = d.dot(g.cov2d_inv * d);
          if (m2 > kCutoffMahalanobisSq) continue;
          const double sigma = g.alpha * std::exp(-0.5 * m2);
          const double wgt = sigma * t;
          color += wgt * g.color;
          acc_a += wgt;
          acc_z += wgt * g.view_depth;
          t *= (1.0 - sigma);
          if (t < early) break;
        }
        for (int c = 0; c < 3; ++c) output_.color.at(y, x, c) = color[c];
        output_.opacity_map.at(y, x) = acc_a;
        output_.depth.at(y, x) = acc_z / std::max(acc_a, kDepthEps);
        output_.alpha_mask.at(y, x) =
            acc_a >= options_.mask_threshold ? 1.0 : 0.0;
      }
    }
  });
}

RenderOutput render(const PointSet& points, const Camera& camera,
                    const RenderOptions& options) {
  return ForwardPass(points, camera, options).output();
}

RenderOutput oracle_render(const PointSet& points, const Camera& camera,
                           const RenderOptions& options) {
  camera.validate();
  const auto projected = project(points.points, camera);
  const int w = camera.width, h = camera.height;
  RenderOutput out;
  out.color = Image(w, h, 3);
  out.opacity_map = Image(w, h, 1);
  out.depth = Image(w, h, 1);
  out.alpha_mask = Image(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d pix(x + 0.5, y + 0.5);
      double t = 1.0;
      Eigen::Vector3d color = Eigen::Vector3d::Zero();
      double acc_a = 0.0, acc_z = 0.0;
      for (const ProjectedGaussian& g : projected) {
        const Eigen::Vector2d d = pix - g.mean2d;
        const double m2 = d.dot(g.cov2d_inv * d);
        if (m2 > kCutoffMahalanobisSq) continue;  // same cutoff as the tiles
        const double sigma = g.alpha * std::exp(-0.5 * m2);
        color += sigma * t * g.color;
        acc_a += sigma * t;
        acc_z += sigma * t * g.view_depth;
        t *= (1.0 - sigma);
      }
      for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color[c];
      out.opacity_map.at(y, x) = acc_a;
      out.depth.at(y, x) = acc_z / std::max(acc_a, kDepthEps);
      out.alpha_mask.at(y, x) = acc_a >= options.mask_threshold ? 1.0 : 0.0;
    }
  }
  return out;
}

LayerPairRender render_layer_pair(const LayeredAvatar& avatar, int m,
                                  const Camera& camera,
                                  const RenderOptions& options) {
  if (m < 1 || m > static_cast<int>(avatar.layers.size())) {
    throw std::out_of_range("render_layer_pair: layer index out of range");
  }
  LayerPairRender pair;
  pair.local = render(PointSet::from_layer(avatar.layers[m - 1]), camera, options);
  pair.global = render(avatar.compose_prefix(m), camera, options);
  return pair;
}

ParamGrads ForwardPass::backward(const LossGrads& grads,
                                 const std::vector<std::uint8_t>& trainable) const {
  const int w = camera_.width, h = camera_.height, ts = options_.tile_size;
  auto check = [&](const Image& img, int ch, const char* name) {
    if (img.empty()) return;
    if (img.width() != w || img.height() != h || img.channels() != ch) {
      throw std::invalid_argument(std::string("backward: ") + name +
                                  " gradient shape does not match the render");
    }
  };
  check(grads.d_color, 3, "color");
  check(grads.d_opacity, 1, "opacity");
  check(grads.d_depth, 1, "depth");
  if (!trainable.empty() && trainable.size() != points_.size()) {
    throw std::invalid_argument("backward: trainable mask size mismatch");
  }
  const bool has_c = !grads.d_color.empty();
  const bool has_a = !grads.d_opacity.empty();
  const bool has_d = !grads.d_depth.empty();
  const double early = options_.early_stop_transmittance;

  // Stage 1: per-tile screen-space gradients.
  std::vector<std::vector<Grad2D>> tile_grads(tile_bins_.size());
  parallel_for(tile_bins_.size(), [&](std::size_t tile) {
    const auto& bin = tile_bins_[tile];
    if (bin.empty()) return;
    auto& tg = tile_grads[tile];
    tg.assign(bin.size(), {});
    std::vector<Contributor> stack;
    stack.reserve(bin.size());

    const int tx = static_cast<int>(tile) % tiles_x_;
    const int ty = static_cast<int>(tile) / tiles_x_;
    const int x0 = tx * ts, x1 = std::min(w, x0 + ts);
    const int y0 = ty * ts, y1 = std::min(h, y0 + ts);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        const Eigen::Vector2d pix(x + 0.5, y + 0.5);

        // Replay the forward walk to recover each contributor's state.
        stack.clear();
        double t = 1.0, acc_a = 0.0, acc_z = 0.0;
        for (std::size_t e = 0; e < bin.size(); ++e) {
          const ProjectedGaussian& g = projected_[bin[e]];
          const Eigen::Vector2d d = pix - g.mean2d;
          const double m2 = d.dot(g.cov2d_inv * d);
          if (m2 > kCutoffMahalanobisSq) continue;
          const double gauss = std::exp(-0.5 * m2);
          const double sigma = g.alpha * gauss;
          stack.push_back({static_cast<int>(e), sigma, gauss, t,
                           g.cov2d_inv * d});
          acc_a += sigma * t;
          acc_z += sigma * t * projected_[bin[e]].view_depth;
          t *= (1.0 - sigma);
          if (t < early) break;
        }
        if (stack.empty()) continue;

        Eigen::Vector3d dc = Eigen::Vector3d::Zero();
        if (has_c) {
          dc = {grads.d_color.at(y, x, 0), grads.d_color.at(y, x, 1),
                grads.d_color.at(y, x, 2)};
        }
        double da_eff = has_a ? grads.d_opacity.at(y, x) : 0.0;
        double d_draw = 0.0;
        if (has_d) {
          const double dd = grads.d_depth.at(y, x);
          const double denom = std::max(acc_a, kDepthEps);
          d_draw = dd / denom;
          if (acc_a > kDepthEps) da_eff -= dd * acc_z / (denom * denom);
        }
        if (dc.isZero(0.0) && da_eff == 0.0 && d_draw == 0.0) continue;

        // Reverse scan with suffix accumulators; division-free so sigma=1
        // is handled exactly.
        Eigen::Vector3d acc_c = Eigen::Vector3d::Zero();
        double acc_alpha = 0.0, acc_depth = 0.0;
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
          const Contributor& s = *it;
          const ProjectedGaussian& g = projected_[bin[s.entry]];
          const double wgt = s.sigma * s.t_before;

          double d_sigma = da_eff * s.t_before * (1.0 - acc_alpha) +
                           d_draw * s.t_before * (g.view_depth - acc_depth);
          for (int c = 0; c < 3; ++c) {
            d_sigma += dc[c] * s.t_before * (g.color[c] - acc_c[c]);
          }

          Grad2D& out = tg[static_cast<std::size_t>(s.entry)];
          out.color += wgt * dc;
          out.z += d_draw * wgt;
          out.alpha += s.gauss * d_sigma;
          const Eigen::Vector2d md = d_sigma * s.sigma * s.lam_delta;
          out.mean2d += md;
          const double half = 0.5 * d_sigma * s.sigma;
          out.cov00 += half * s.lam_delta.x() * s.lam_delta.x();
          out.cov01 += 2.0 * half * s.lam_delta.x() * s.lam_delta.y();
          out.cov11 += half * s.lam_delta.y() * s.lam_delta.y();

          acc_c = g.color * s.sigma + (1.0 - s.sigma) * acc_c;
          acc_alpha = s.sigma + (1.0 - s.sigma) * acc_alpha;
          acc_depth = g.view_depth * s.sigma + (1.0 - s.sigma) * acc_depth;
        }
      }
    }
  });

  // Stage 2: deterministic merge in tile order.
  std::vector<Grad2D> merged(projected_.size());
  for (std::size_t tile = 0; tile < tile_bins_.size(); ++tile) {
    const auto& bin = tile_bins_[tile];
    if (tile_grads[tile].empty()) continue;
    for (std::size_t e = 0; e < bin.size(); ++e) {
      merged[static_cast<std::size_t>(bin[e])].add(tile_grads[tile][e]);
    }
  }

  // Stage 3: chain screen-space gradients to point parameters.
  ParamGrads result;
  result.resize(points_.size());
  const Eigen::Matrix3d wtc = camera_.world_to_camera();
  const double f = camera_.focal_px();
  parallel_for(projected_.size(), [&](std::size_t k) {
    const ProjectedGaussian& g = projected_[k];
    const int src = g.source_index;
    if (!trainable.empty() && !trainable[static_cast<std::size_t>(src)]) return;
    const Grad2D& m2 = merged[k];
    const GaussianPoint& p = points_.points[static_cast<std::size_t>(src)];

    // Color / opacity logits: activation jacobians.
    for (int c = 0; c < 3; ++c) {
      result.d_color_logit[src][c] = m2.color[c] * sigmoid_grad(p.color_logit[c]);
    }
    result.d_opacity_logit[src] = m2.alpha * sigmoid_grad(p.opacity_logit);

    Eigen::Matrix2d s_cov;
    s_cov << m2.cov00, 0.5 * m2.cov01, 0.5 * m2.cov01, m2.cov11;
    const Eigen::Vector2d d_uv = m2.mean2d;
    const double d_z = m2.z;
    if (s_cov.isZero(0.0) && d_uv.isZero(0.0) && d_z == 0.0) return;

    const Eigen::Vector3d p_cam = wtc * (p.center - camera_.position);
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(p_cam, f);
    const Eigen::Matrix<double, 2, 3> m = jac * wtc;
    const Eigen::Matrix3d sigma3 = p.covariance();

    // d cov2d = d(M SigmaM^T): gradient w.r.t. Sigma and w.r.t. J.
    const Eigen::Matrix3d d_sigma3 = m.transpose() * s_cov * m;
    const Eigen::Matrix<double, 2, 3> d_m = 2.0 * s_cov * m * sigma3;
    const Eigen::Matrix<double, 2, 3> d_jac = d_m * wtc.transpose();

    // Mean projection and the Jacobian's own dependence on p_cam.
    Eigen::Vector3d d_pcam = jac.transpose() * d_uv;
    const double z = p_cam.z(), z2 = z * z, z3 = z2 * z;
    d_pcam.x() += d_jac(0, 2) * (-f / z2);
    d_pcam.y() += d_jac(1, 2) * (-f / z2);
    d_pcam.z() += d_jac(0, 0) * (-f / z2) + d_jac(1, 1) * (-f / z2) +
                  d_jac(0, 2) * (2.0 * f * p_cam.x() / z3) +
                  d_jac(1, 2) * (2.0 * f * p_cam.y() / z3);
    d_pcam.z() += d_z;
    result.d_center[src] = wtc.transpose() * d_pcam;

    // Sigma = R diag(s^2) R^T.
    const Eigen::Matrix3d rot = p.rotation_matrix();
    const Eigen::Vector3d s2 = p.scale().array().square();
    const Eigen::Matrix3d rgr = rot.transpose() * d_sigma3 * rot;
    for (int a = 0; a < 3; ++a) {
      result.d_log_scale[src][a] = 2.0 * s2[a] * rgr(a, a);
    }

    const Eigen::Matrix3d d_rot =
        2.0 * d_sigma3 * rot * s2.asDiagonal().toDenseMatrix();
    const Eigen::Vector4d q = p.unit_rotation();
    const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
    Eigen::Matrix3d dr_dq[4];
    dr_dq[0] << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
    dr_dq[1] << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
    dr_dq[2] << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
    dr_dq[3] << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
    Eigen::Vector4d d_qunit;
    for (int a = 0; a < 4; ++a) {
      d_qunit[a] = 2.0 * (d_rot.array() * dr_dq[a].array()).sum();
    }
    const double qnorm = p.rotation.norm();
    result.d_rotation[src] =
        (d_qunit - q * q.dot(d_qunit)) / qnorm;
  });

  return result;
}

}  // namespace lgs
