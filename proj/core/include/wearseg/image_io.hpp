#pragma once

#include <filesystem>

#include "wearseg/raster.hpp"

namespace wearseg {

/// 8-bit PNG <-> [0,1] float raster. Color files are returned in RGB order.
Image read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Image& image);

/// Single-channel 8-bit PNG with literal label values.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const Mask& mask);

/// Rounds to the nearest 8-bit level, as a PNG round trip would.
Image quantize_8bit(const Image& image);

}  // namespace wearseg
