// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "maskfill/tensor.hpp"

namespace maskfill {

/// Decoded picture: [1,C,H,W] with C in {1,3}, intensities scaled to [0,1].
struct ImageBuffer {
  Image pixels;
  int bit_depth = 8; ///< 8 or 16, as stored in the source file; 32 for float maps

  std::size_t channels() const { return pixels.dim(1); }
  std::size_t height() const { return pixels.dim(2); }
  std::size_t width() const { return pixels.dim(3); }
};

/// Reads binary or ASCII portable any-map (P2, P3, P5, P6). Samples are
/// divided by the file's maxval; 16-bit samples are big-endian.
/// Float maps (PF color, Pf gray) are read as stored, without scaling or
/// clamping; a negative scale field marks little-endian data.
ImageBuffer load_image(const std::filesystem::path &path);

/// Writes P5 (C == 1) or P6 (C == 3). Values are clamped to [0,1] and
/// quantized with round-half-up: q = floor(v * maxval + 0.5).
/// A ".pfm" path writes a little-endian float map instead, unclamped, and
/// ignores `bit_depth`.
void save_image(const Image &img, const std::filesystem::path &path, int bit_depth = 8);

/// Replicates a single channel or averages three to reach `channels`.
Image match_channels(const Image &img, std::size_t channels);

/// True for the extensions load_image understands.
bool is_image_path(const std::filesystem::path &path);

/// Image files directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path &dir);

} // namespace maskfill
