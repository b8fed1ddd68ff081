#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icpipe/evaluation.hpp"
#include "icpipe/filtering.hpp"
#include "icpipe/hybrid.hpp"
#include "icpipe/pyramid.hpp"
#include "icpipe/segmentation.hpp"

namespace icpipe::pipeline {

struct StageTimings {
    double filter_ms = 0.0;
    double inference_ms = 0.0;
    double total_ms = 0.0;
};

struct PatchScore {
    pyramid::PatchRef ref;
    double score = 0.0;
};

struct SlideResult {
    std::string slide_id;
    std::vector<PatchScore> patch_scores;  // fixed patch-index order
    double s_ic = 0.0;
    evaluation::SlideClass predicted = evaluation::SlideClass::Rest;
    std::uint64_t n_retained = 0;
    bool no_epithelium = false;
    std::uint64_t inference_patch_reads = 0;
    StageTimings timings;
    filtering::FilterReport filter_report;
};

struct PipelineConfig {
    segmentation::SegmentationConfig seg;
    filtering::FilterConfig filter;
    int workers = 1;
};

// The x5 context patch concentric with an x20 patch: same pixel size, 4x the
// base footprint, white-padded at borders.
RgbImage extract_context_patch(const pyramid::PyramidImage& pyr, const pyramid::PatchRef& ref);

// S_IC = sum of scores strictly above p0, divided by n (the retained patch
// count). Zero when n is zero. Double-precision sum in the given order.
double compute_s_ic(std::span<const double> scores, double p0, std::uint64_t n);

// Segmentation, filter cascade, per-patch scoring of x5 context patches,
// S_IC = sum of scores above p0 over the retained count, slide class by the
// slide threshold. Score summation runs in double precision in fixed
// patch-index order.
SlideResult score_slide(const pyramid::PyramidImage& pyr, const model::HybridModel& model,
                        const PipelineConfig& cfg, const std::string& slide_id,
                        const filtering::NucleiDetector* detector = nullptr);

// 256-entry blue-to-red linear colormap: entry i is (i, 0, 255-i).
std::array<std::uint8_t, 3> heatmap_color(double score);

// RGBA overlay at x2.5: each retained patch painted at its footprint with
// alpha 128; unscored area transparent.
RgbaImage render_heatmap(const SlideResult& result, const pyramid::PyramidImage& pyr);

void write_result_json(const SlideResult& result, const model::HybridModel& model,
                       const std::filesystem::path& path);

}  // namespace icpipe::pipeline
