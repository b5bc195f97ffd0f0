#pragma once

#include <string>

#include "layergs/types.hpp"

namespace lgs {

// Layered-avatar asset container, version 1. Little-endian throughout.
//
//   magic "GSAV" | u32 version | u32 layer_count |
//   u32 body_prompt_len | body_prompt bytes |
//   per layer: u64 offset, u64 size           (table of contents)
//   per layer section:
//     i32 layer_index | u32 prompt_len | prompt bytes | u8 frozen[5] |
//     u64 point_count |
//     f32 center[3N] | f32 log_scale[3N] | f32 rotation[4N] |
//     f32 color_logit[3N] | f32 opacity_logit[N] | u32 crc32(section)
//
// Arrays hold the raw (pre-activation) parameters, so save -> load -> save
// is byte-identical and a reloaded avatar renders bit-exactly like the
// saved one.

/// Parameters are narrowed to f32 on save. Throws AssetError on I/O
/// failure.
void save_asset(const std::string& path, const LayeredAvatar& avatar);

/// Validates magic, version, lengths and per-section checksums; throws
/// AssetError describing the first problem found.
LayeredAvatar load_asset(const std::string& path);

/// Human-readable table of contents (for the `inspect` command).
std::string asset_toc(const std::string& path);

}  // namespace lgs
