#include "icpipe/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"

namespace icpipe::pipeline {

using evaluation::SlideClass;

RgbImage extract_context_patch(const pyramid::PyramidImage& pyr, const pyramid::PatchRef& ref) {
    if (ref.zoom != 20.0) throw DataError("context extraction expects an x20 patch ref");
    // base center -> x5 grid (/4) -> top-left of a patch of the same pixel size
    const int cx5 = (2 * ref.x + ref.side) / 8;
    const int cy5 = (2 * ref.y + ref.side) / 8;
    const int x5 = cx5 - ref.side / 2;
    const int y5 = cy5 - ref.side / 2;
    return pyr.read_region(5.0, x5, y5, ref.side, ref.side);
}

double compute_s_ic(std::span<const double> scores, double p0, std::uint64_t n) {
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (double s : scores) {
        if (s > p0) sum += s;
    }
    return sum / static_cast<double>(n);
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

SlideResult score_slide(const pyramid::PyramidImage& pyr, const model::HybridModel& model,
                        const PipelineConfig& cfg, const std::string& slide_id,
                        const filtering::NucleiDetector* detector) {
    SlideResult result;
    result.slide_id = slide_id;
    const auto t_start = std::chrono::steady_clock::now();

    auto t_filter = std::chrono::steady_clock::now();
    std::vector<pyramid::PatchRef> retained;
    try {
        const segmentation::BinaryMask tissue = segmentation::tissue_mask(pyr);
        const segmentation::BinaryMask epithelium =
            segmentation::epithelium_mask(pyr, tissue, cfg.seg, cfg.workers);
        filtering::FilterResult fr =
            filtering::filter_patches(pyr, epithelium, cfg.filter, detector, cfg.workers);
        retained = std::move(fr.retained);
        result.filter_report = fr.report;
    } catch (const DegenerateHistogramError&) {
        // blank slide: no tissue at all
    }
    result.timings.filter_ms = ms_since(t_filter);

    result.n_retained = retained.size();
    if (retained.empty()) {
        result.no_epithelium = true;
        result.s_ic = 0.0;
        result.predicted = SlideClass::Rest;
        result.timings.total_ms = ms_since(t_start);
        return result;
    }

    const auto t_infer = std::chrono::steady_clock::now();
    result.patch_scores.resize(retained.size());
    std::atomic<std::uint64_t> reads{0};
    parallel_for(retained.size(), cfg.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const RgbImage context = extract_context_patch(pyr, retained[i]);
            reads.fetch_add(1, std::memory_order_relaxed);
            result.patch_scores[i] = {retained[i], model.predict_proba(context)};
        }
    });
    result.inference_patch_reads = reads.load();
    result.timings.inference_ms = ms_since(t_infer);

    std::vector<double> scores(result.patch_scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = result.patch_scores[i].score;
    result.s_ic = compute_s_ic(scores, model.p0, result.n_retained);
    result.predicted = result.s_ic > model.slide_threshold ? SlideClass::IC : SlideClass::Rest;
    result.timings.total_ms = ms_since(t_start);
    return result;
}

std::array<std::uint8_t, 3> heatmap_color(double score) {
    int idx = round_half_up(score * 255.0);
    if (idx < 0) idx = 0;
    if (idx > 255) idx = 255;
    return {static_cast<std::uint8_t>(idx), 0, static_cast<std::uint8_t>(255 - idx)};
}

RgbaImage render_heatmap(const SlideResult& result, const pyramid::PyramidImage& pyr) {
    const pyramid::Level& lvl = pyr.level(2.5);
    RgbaImage overlay(lvl.width, lvl.height);  // zero-initialized: transparent
    constexpr int kScale = 8;                  // x20 -> x2.5
    for (const PatchScore& ps : result.patch_scores) {
        const auto rgb = heatmap_color(ps.score);
        const int x0 = ps.ref.x / kScale;
        const int y0 = ps.ref.y / kScale;
        const int side = ps.ref.side / kScale;
        const int x1 = std::min(x0 + side, lvl.width);
        const int y1 = std::min(y0 + side, lvl.height);
        for (int y = y0; y < y1; ++y) {
            std::uint8_t* px = overlay.px(x0, y);
            for (int x = x0; x < x1; ++x, px += 4) {
                px[0] = rgb[0];
                px[1] = rgb[1];
                px[2] = rgb[2];
                px[3] = 128;
            }
        }
    }
    return overlay;
}

void write_result_json(const SlideResult& result, const model::HybridModel& model,
                       const std::filesystem::path& path) {
    nlohmann::json j;
    j["slide_id"] = result.slide_id;
    j["s_ic"] = result.s_ic;
    j["predicted_class"] = result.predicted == SlideClass::IC ? "IC" : "Rest";
    j["n_retained"] = result.n_retained;
    j["p0"] = model.p0;
    j["slide_threshold"] = model.slide_threshold;
    j["no_epithelium"] = result.no_epithelium;
    j["inference_patch_reads"] = result.inference_patch_reads;
    nlohmann::json patches = nlohmann::json::array();
    for (const PatchScore& ps : result.patch_scores) {
        patches.push_back({{"x", ps.ref.x}, {"y", ps.ref.y}, {"score", ps.score}});
    }
    j["patches"] = patches;
    j["timings_ms"] = {{"filter", result.timings.filter_ms},
                       {"inference", result.timings.inference_ms},
                       {"total", result.timings.total_ms}};
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

}  // namespace icpipe::pipeline
