#include "layergs/losses.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lgs {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": image shape mismatch");
  }
}

void warn_empty(const char* who) {
  std::cerr << "[layergs] " << who << ": empty mask, loss is 0\n";
}

}  // namespace

std::size_t MaskImage::count() const {
  std::size_t n = 0;
  for (const double v : values.raw()) n += (v != 0.0);
  return n;
}

MaskImage synth_mask(const RenderOutput& render, MaskImage::Source source,
                     double threshold) {
  MaskImage mask;
  mask.source = source;
  const Image& op = render.opacity_map;
  mask.values = Image(op.width(), op.height(), 1);
  for (std::size_t i = 0; i < op.size(); ++i) {
    mask.values.raw()[i] = op.raw()[i] >= threshold ? 1.0 : 0.0;
  }
  return mask;
}

LossResult density_loss(const Image& opacity_map, const MaskImage& mask) {
  require_same_shape(opacity_map, mask.values, "density_loss");
  LossResult res;
  res.grad = Image(opacity_map.width(), opacity_map.height(), 1);

  double mn = std::numeric_limits<double>::infinity();
  double mx = -mn;
  std::size_t n = 0;
  for (std::size_t i = 0; i < opacity_map.size(); ++i) {
    if (mask.values.raw()[i] == 0.0) continue;
    mn = std::min(mn, opacity_map.raw()[i]);
    mx = std::max(mx, opacity_map.raw()[i]);
    ++n;
  }
  if (n == 0) {
    warn_empty("density_loss");
    return res;
  }
  // Masked density uniform within a thousandth of the opacity range counts
  // as uniform: the normalized value is defined as 1 and the loss is 0,
  // its optimum. Without the dead zone the min-max normalization is scale
  // free and would re-amplify vanishing residual noise to full range,
  // turning the optimum into a repeller.
  const double span = mx - mn;
  if (span <= 1e-3) {
    return res;
  }
  const double inv_span = 1.0 / span;  // min/max detached
  double acc = 0.0;
  for (std::size_t i = 0; i < opacity_map.size(); ++i) {
    if (mask.values.raw()[i] == 0.0) continue;
    const double fn = (opacity_map.raw()[i] - mn) * inv_span;
    const double diff = 1.0 - fn;
    acc += diff * diff;
    res.grad.raw()[i] = -2.0 * diff * inv_span / static_cast<double>(n);
  }
  res.value = acc / static_cast<double>(n);
  return res;
}

SsimResult ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.channels() != 1) {
    throw std::invalid_argument("ssim: expected single-channel images");
  }
  const int w = a.width(), h = a.height();
  if (w < kWindow || h < kWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }

  // Separable Gaussian window, normalized to sum 1.
  double k1d[kWindow];
  double ksum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    k1d[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    ksum += k1d[i];
  }
  for (double& v : k1d) v /= ksum;
  double win[kWindow][kWindow];
  for (int i = 0; i < kWindow; ++i) {
    for (int j = 0; j < kWindow; ++j) win[i][j] = k1d[i] * k1d[j];
  }

  // Dynamic range of the reference.
  double mn = b.raw()[0], mx = b.raw()[0];
  for (const double v : b.raw()) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  const double range = std::max(mx - mn, 1e-8);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  SsimResult res;
  res.grad_a = Image(w, h, 1);
  res.grad_b = Image(w, h, 1);
  const int oy_max = h - kWindow + 1, ox_max = w - kWindow + 1;
  const double n_win = static_cast<double>(oy_max) * ox_max;

  double total = 0.0;
  for (int oy = 0; oy < oy_max; ++oy) {
    for (int ox = 0; ox < ox_max; ++ox) {
      double ma = 0, mb = 0, eaa = 0, ebb = 0, eab = 0;
      for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
          const double va = a.at(oy + i, ox + j);
          const double vb = b.at(oy + i, ox + j);
          const double wij = win[i][j];
          ma += wij * va;
          mb += wij * vb;
          eaa += wij * va * va;
          ebb += wij * vb * vb;
          eab += wij * va * vb;
        }
      }
      const double va2 = eaa - ma * ma;
      const double vb2 = ebb - mb * mb;
      const double vab = eab - ma * mb;
      const double a1 = 2.0 * ma * mb + c1;
      const double a2 = 2.0 * vab + c2;
      const double b1 = ma * ma + mb * mb + c1;
      const double b2 = va2 + vb2 + c2;
      const double denom = b1 * b2;
      const double s = (a1 * a2) / denom;
      total += s;

      // Window-level partials (means and raw moments as intermediates).
      const double ds_da1 = a2 / denom;
      const double ds_da2 = a1 / denom;
      const double ds_db1 = -s / b1;
      const double ds_db2 = -s / b2;
      const double ds_dma = 2.0 * mb * ds_da1 - 2.0 * mb * ds_da2 +
                            2.0 * ma * ds_db1 - 2.0 * ma * ds_db2;
      const double ds_dmb = 2.0 * ma * ds_da1 - 2.0 * ma * ds_da2 +
                            2.0 * mb * ds_db1 - 2.0 * mb * ds_db2;
      const double ds_deaa = ds_db2;
      const double ds_debb = ds_db2;
      const double ds_deab = 2.0 * ds_da2;

      for (int i = 0; i < kWindow; ++i) {
        for (int j = 0; j < kWindow; ++j) {
          const double wij = win[i][j] / n_win;
          const double va = a.at(oy + i, ox + j);
          const double vb = b.at(oy + i, ox + j);
          res.grad_a.at(oy + i, ox + j) +=
              wij * (ds_dma + 2.0 * va * ds_deaa + vb * ds_deab);
          res.grad_b.at(oy + i, ox + j) +=
              wij * (ds_dmb + 2.0 * vb * ds_debb + va * ds_deab);
        }
      }
    }
  }
  res.value = total / n_win;
  return res;
}

LossResult human_fitting_loss(const Image& d_av, const Image& d_m,
                              const MaskImage& m_av, const MaskImage& m_m) {
  require_same_shape(d_av, d_m, "human_fitting_loss");
  require_same_shape(d_av, m_av.values, "human_fitting_loss");
  require_same_shape(d_av, m_m.values, "human_fitting_loss");
  LossResult res;
  res.grad = Image(d_m.width(), d_m.height(), 1);
  std::size_t n = 0;
  for (std::size_t i = 0; i < d_av.size(); ++i) {
    if (m_av.values.raw()[i] != 0.0 && m_m.values.raw()[i] != 0.0) ++n;
  }
  if (n == 0) {
    warn_empty("human_fitting_loss");
    return res;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d_av.size(); ++i) {
    if (m_av.values.raw()[i] == 0.0 || m_m.values.raw()[i] == 0.0) continue;
    const double diff = d_av.raw()[i] - d_m.raw()[i];
    acc += diff * diff;
    res.grad.raw()[i] = -2.0 * diff / static_cast<double>(n);
  }
  res.value = acc / static_cast<double>(n);
  return res;
}

LossResult similarity_loss(const Image& d_m, const Image& d_m_before) {
  SsimResult s = ssim(d_m, d_m_before);
  LossResult res;
  res.value = -s.value;
  res.grad = std::move(s.grad_a);
  for (double& v : res.grad.raw()) v = -v;
  return res;
}

LossResult visibility_loss(const Image& d_av, const Image& d_m,
                           const MaskImage& m_m, double delta_occ) {
  require_same_shape(d_av, d_m, "visibility_loss");
  require_same_shape(d_av, m_m.values, "visibility_loss");
  LossResult res;
  res.grad = Image(d_m.width(), d_m.height(), 1);
  const std::size_t n = m_m.count();
  if (n == 0) {
    warn_empty("visibility_loss");
    return res;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d_av.size(); ++i) {
    if (m_m.values.raw()[i] == 0.0) continue;
    const double hinge = d_m.raw()[i] - d_av.raw()[i] + delta_occ;
    if (hinge > 0.0) {
      acc += hinge;
      res.grad.raw()[i] = 1.0 / static_cast<double>(n);
    }
  }
  res.value = acc / static_cast<double>(n);
  return res;
}

}  // namespace lgs
