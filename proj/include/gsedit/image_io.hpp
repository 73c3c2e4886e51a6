#pragma once

#include <filesystem>

#include "gsedit/tensor.hpp"

namespace gsedit {

/// 8-bit PNG to [0, 1] doubles. Gray, gray+alpha, RGB and RGBA inputs are
/// expanded to three channels; alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as 8-bit PNG, clamping to [0, 1] and
/// rounding to the nearest code.
void write_png(const Image& image, const std::filesystem::path& path);

/// Gray PNG mask; a pixel is set when its first channel is >= 0.5.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

/// Portable float map, little-endian (scale -1.0), 1 or 3 channels.
/// Rows are stored bottom to top as the format requires.
Tensor read_pfm(const std::filesystem::path& path);
void write_pfm(const Tensor& tensor, const std::filesystem::path& path);

}  // namespace gsedit
