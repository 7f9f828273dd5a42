// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace idstream {

/// Minimal 8-bit RGB PNG encoder (zlib-deflated, filter 0 per scanline).
std::vector<std::uint8_t> png_encode_rgb8(int width, int height,
                                          std::span<const std::uint8_t> rgb);

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Deterministic 256x256 stand-in render of a latent payload, base64 PNG.
std::string render_latent_png_base64(std::span<const float> latent);

}  // namespace idstream
