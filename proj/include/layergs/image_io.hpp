#pragma once

#include <string>

#include "layergs/image.hpp"

namespace lgs {

/// 8-bit PNG, grayscale (1 channel) or RGB (3 channels). Values are clamped
/// to [0, 1] and quantized.
void write_png(const std::string& path, const Image& img);

/// Portable FloatMap, 32-bit little-endian floats ("Pf" for 1 channel,
/// "PF" for 3). Rows are stored bottom-up per the PFM convention.
void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

}  // namespace lgs
