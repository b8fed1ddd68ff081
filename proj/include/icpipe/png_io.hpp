#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "icpipe/image.hpp"

namespace icpipe {

// Thin libpng wrappers. Compression is pinned (level 1, default filtering)
// so repeated writes of the same pixels are byte-identical.
void write_png(const std::filesystem::path& path, const RgbImage& img);
void write_png(const std::filesystem::path& path, const RgbaImage& img);
RgbImage read_png_rgb(const std::filesystem::path& path);

// 1-bit grayscale PNG for debug mask export; `bits` holds one byte per pixel
// (0 = background, nonzero = foreground).
void write_png_bilevel(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& bits);

}  // namespace icpipe
