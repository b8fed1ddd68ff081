#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "icpipe/image.hpp"
#include "icpipe/pyramid.hpp"
#include "icpipe/segmentation.hpp"

namespace icpipe::filtering {

struct FilterConfig {
    double blur_variance_min = 50.0;     // Laplacian-variance threshold on 0-255 gray
    int thres_1 = 25;                    // gray-level window around the modal value
    double thres_2 = 0.9;                // max allowed proportion inside that window
    double nuclei_min_fraction = 0.05;   // min fraction of dark blue-dominant pixels
    int nuclei_dark_cutoff = 120;        // gray level under which a pixel counts as dark
    double epithelium_coverage_min = 0.25;  // gate for x20 candidates vs x2.5 mask
};

struct FilterReport {
    std::uint64_t no_nuclei = 0;
    std::uint64_t blurry = 0;
    std::uint64_t insufficient_tissue = 0;
    std::uint64_t retained = 0;
    std::uint64_t total = 0;
    double nuclei_ms = 0.0;
    double blur_ms = 0.0;
    double tissue_ms = 0.0;

    bool reconciles() const {
        return no_nuclei + blurry + insufficient_tissue + retained == total;
    }
};

// Pluggable replacement for the nuclei-presence heuristic.
class NucleiDetector {
public:
    virtual ~NucleiDetector() = default;
    virtual bool contains_nuclei(const RgbImage& patch) const = 0;
};

// Population variance of the 4-neighbor Laplacian over interior pixels.
// Throws PatchTooSmallError below 3x3.
double laplacian_variance(const GrayImage& patch);

bool passes_blur(const GrayImage& patch, const FilterConfig& cfg);
bool passes_tissue_fraction(const GrayImage& patch, const FilterConfig& cfg);
// Detector failures surface as DetectorError; they are never silently kept.
bool passes_nuclei(const RgbImage& patch, const FilterConfig& cfg,
                   const NucleiDetector* detector = nullptr);

// Applies the cascade (nuclei, blur, tissue) to one patch; returns the final
// status and reason.
std::pair<pyramid::PatchStatus, pyramid::DiscardReason> run_cascade(
    const RgbImage& patch, const FilterConfig& cfg, const NucleiDetector* detector,
    FilterReport& report);

struct FilterResult {
    std::vector<pyramid::PatchRef> retained;  // row-major patch order
    FilterReport report;
};

// Enumerates non-overlapping 256^2 x20 patches whose footprint has at least
// cfg.epithelium_coverage_min coverage in the x2.5 epithelium mask, then runs
// the cascade on each. Output order is row-major regardless of worker count.
FilterResult filter_patches(const pyramid::PyramidImage& pyr,
                            const segmentation::BinaryMask& epithelium,
                            const FilterConfig& cfg,
                            const NucleiDetector* detector = nullptr, int workers = 1);

void write_filter_report(const FilterReport& report, const std::filesystem::path& path);

}  // namespace icpipe::filtering
