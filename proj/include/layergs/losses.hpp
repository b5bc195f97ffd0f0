#pragma once

#include "layergs/image.hpp"
#include "layergs/render.hpp"

namespace lgs {

/// Binary component mask plus how it was produced.
struct MaskImage {
  enum class Source { layer_opacity, avatar_opacity, external };
  Image values;  // H x W, entries 0 or 1
  Source source = Source::external;

  std::size_t count() const;
};

/// Threshold the rendered opacity map at the mask threshold. The mask is a
/// constant for gradient purposes, like an external segmentation.
MaskImage synth_mask(const RenderOutput& render,
                     MaskImage::Source source = MaskImage::Source::layer_opacity,
                     double threshold = 0.5);

/// Scalar loss plus its gradient w.r.t. the differentiable image argument.
struct LossResult {
  double value = 0.0;
  Image grad;
};

/// Mean squared deficit between the mask and the min-max normalized masked
/// opacity, over masked pixels. The min/max are treated as constants for
/// the gradient. Degenerate (uniform) masked opacity normalizes to 1, so
/// the loss is 0 at its optimum. Empty mask -> 0.
LossResult density_loss(const Image& opacity_map, const MaskImage& mask);

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid windows only,
/// C1=(0.01 L)^2 / C2=(0.03 L)^2 with L the dynamic range of the reference
/// b. Differentiable in both arguments. Throws std::invalid_argument for
/// images smaller than the window.
struct SsimResult {
  double value = 0.0;
  Image grad_a;
  Image grad_b;
};
SsimResult ssim(const Image& a, const Image& b);

/// Mean squared depth difference over the mask overlap; gradient on d_m
/// only (the target depth is detached). Empty overlap -> 0.
LossResult human_fitting_loss(const Image& d_av, const Image& d_m,
                              const MaskImage& m_av, const MaskImage& m_m);

/// -SSIM(d_m, d_m_before); the pre-transfer depth is detached.
LossResult similarity_loss(const Image& d_m, const Image& d_m_before);

/// Mean over masked pixels of max(0, d_m - d_av + delta_occ): hinge that
/// keeps the garment at least delta_occ nearer than the occluders.
LossResult visibility_loss(const Image& d_av, const Image& d_m,
                           const MaskImage& m_m, double delta_occ = 0.03);

}  // namespace lgs
