#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "icpipe/image.hpp"
#include "icpipe/pyramid.hpp"

namespace icpipe::segmentation {

struct BinaryMask {
    double zoom = 1.0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // one byte per pixel, 0/1

    BinaryMask() = default;
    BinaryMask(double z, int w, int h)
        : zoom(z), width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) {
        bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
    }
    std::uint64_t count_foreground() const;
    double foreground_fraction() const;
};

struct SegmentationConfig {
    double smoothing_sigma = 5.0;     // at x2.5, kernel radius = ceil(3*sigma)
    int tissue_patch_side = 256;      // x2.5 patch side for epithelium stage
    double tissue_coverage_min = 0.10;  // gate for x2.5 patches, vs upscaled x1 mask
};

// Threshold maximizing between-class variance; pixels <= t are class 0,
// > t class 1. Ties resolve to the lowest maximizing threshold. Throws
// DegenerateHistogramError when fewer than two bins are populated.
int otsu_threshold(const std::array<std::uint64_t, 256>& hist);

std::array<std::uint64_t, 256> histogram(const GrayImage& img);

// Separable Gaussian, kernel radius ceil(3*sigma), clamp-to-edge,
// renormalized to sum 1. Rounds half-up once, after both passes.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// Otsu split of the x1 level; the darker class is tissue. Propagates
// DegenerateHistogramError for blank slides.
BinaryMask tissue_mask(const pyramid::PyramidImage& pyr);

// Per-patch epithelium segmentation at x2.5: gray -> blur -> Otsu, darker
// class marked, on patches with tissue coverage >= config gate. Degenerate
// patches contribute nothing.
BinaryMask epithelium_mask(const pyramid::PyramidImage& pyr, const BinaryMask& tissue,
                           const SegmentationConfig& cfg, int workers = 1);

// Debug export; not part of the pipeline contract.
void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path);

// Index into the x1 mask grid of the pixel covering the center of pixel
// `coord` at zoom `from_zoom` (coordinate mapping goes through the base grid).
int map_to_x1(int coord, double from_zoom, int x1_dim);

}  // namespace icpipe::segmentation
