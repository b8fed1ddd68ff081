#include "icpipe/filtering.hpp"

#include <array>
#include <chrono>
#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"

namespace icpipe::filtering {

using pyramid::DiscardReason;
using pyramid::PatchRef;
using pyramid::PatchStatus;

double laplacian_variance(const GrayImage& patch) {
    if (patch.width < 3 || patch.height < 3) {
        throw PatchTooSmallError("laplacian_variance needs at least a 3x3 patch");
    }
    const int w = patch.width, h = patch.height;
    double sum = 0.0, sum_sq = 0.0;
    for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
            const double r = static_cast<double>(patch.at(x, y - 1)) + patch.at(x - 1, y) +
                             patch.at(x + 1, y) + patch.at(x, y + 1) -
                             4.0 * patch.at(x, y);
            sum += r;
            sum_sq += r * r;
        }
    }
    const double n = static_cast<double>(w - 2) * (h - 2);
    const double mean = sum / n;
    return sum_sq / n - mean * mean;
}

bool passes_blur(const GrayImage& patch, const FilterConfig& cfg) {
    return laplacian_variance(patch) >= cfg.blur_variance_min;
}

bool passes_tissue_fraction(const GrayImage& patch, const FilterConfig& cfg) {
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t v : patch.data) ++hist[v];
    int val = 0;
    for (int i = 1; i < 256; ++i) {
        if (hist[i] > hist[val]) val = i;  // ties keep the smallest value
    }
    std::uint64_t close = 0;
    for (int i = 0; i < 256; ++i) {
        if (std::abs(val - i) < cfg.thres_1) close += hist[i];
    }
    const double prop = static_cast<double>(close) / static_cast<double>(patch.data.size());
    return !(prop > cfg.thres_2);
}

bool passes_nuclei(const RgbImage& patch, const FilterConfig& cfg,
                   const NucleiDetector* detector) {
    if (detector != nullptr) {
        try {
            return detector->contains_nuclei(patch);
        } catch (const std::exception& e) {
            throw DetectorError(std::string("nuclei detector failed: ") + e.what());
        }
    }
    std::uint64_t dark_blue = 0;
    const std::uint8_t* p = patch.data.data();
    const std::size_t n = patch.pixel_count();
    for (std::size_t i = 0; i < n; ++i, p += 3) {
        const std::uint8_t gray = luma_bt601(p[0], p[1], p[2]);
        if (gray < cfg.nuclei_dark_cutoff && p[2] >= p[0]) ++dark_blue;
    }
    return static_cast<double>(dark_blue) / static_cast<double>(n) >= cfg.nuclei_min_fraction;
}

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

}  // namespace

std::pair<PatchStatus, DiscardReason> run_cascade(const RgbImage& patch, const FilterConfig& cfg,
                                                  const NucleiDetector* detector,
                                                  FilterReport& report) {
    auto t0 = std::chrono::steady_clock::now();
    const bool nuclei_ok = passes_nuclei(patch, cfg, detector);
    report.nuclei_ms += ms_since(t0);
    if (!nuclei_ok) return {PatchStatus::Discarded, DiscardReason::NoNuclei};

    const GrayImage gray = to_grayscale(patch);
    t0 = std::chrono::steady_clock::now();
    const bool sharp = passes_blur(gray, cfg);
    report.blur_ms += ms_since(t0);
    if (!sharp) return {PatchStatus::Discarded, DiscardReason::Blurry};

    t0 = std::chrono::steady_clock::now();
    const bool tissue_ok = passes_tissue_fraction(gray, cfg);
    report.tissue_ms += ms_since(t0);
    if (!tissue_ok) return {PatchStatus::Discarded, DiscardReason::InsufficientTissue};

    return {PatchStatus::Retained, DiscardReason::None};
}

FilterResult filter_patches(const pyramid::PyramidImage& pyr,
                            const segmentation::BinaryMask& epithelium,
                            const FilterConfig& cfg, const NucleiDetector* detector,
                            int workers) {
    if (epithelium.zoom != 2.5) throw DataError("filter_patches expects an x2.5 mask");
    constexpr int kSide = 256;
    constexpr int kMaskScale = 8;  // x20 -> x2.5
    const pyramid::Level& base = pyr.level(20.0);
    const int cols = (base.width + kSide - 1) / kSide;
    const int rows = (base.height + kSide - 1) / kSide;
    constexpr int kWin = kSide / kMaskScale;  // mask window side per patch

    // Candidate selection happens up front so the cascade only sees patches
    // that overlap epithelium.
    std::vector<PatchRef> candidates;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int mx0 = c * kWin;
            const int my0 = r * kWin;
            const int mx1 = std::min(mx0 + kWin, epithelium.width);
            const int my1 = std::min(my0 + kWin, epithelium.height);
            std::uint64_t covered = 0;
            for (int my = my0; my < my1; ++my) {
                for (int mx = mx0; mx < mx1; ++mx) {
                    if (epithelium.at(mx, my)) ++covered;
                }
            }
            const double coverage = static_cast<double>(covered) / (kWin * kWin);
            if (coverage >= cfg.epithelium_coverage_min) {
                candidates.push_back(PatchRef{20.0, c * kSide, r * kSide, kSide,
                                              PatchStatus::Retained, DiscardReason::None});
            }
        }
    }

    std::vector<FilterReport> worker_reports(candidates.size());
    parallel_for(candidates.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            PatchRef& ref = candidates[i];
            const RgbImage patch = pyr.read_region(20.0, ref.x, ref.y, ref.side, ref.side);
            const auto [status, reason] = run_cascade(patch, cfg, detector, worker_reports[i]);
            ref.status = status;
            ref.reason = reason;
        }
    });

    FilterResult result;
    result.report.total = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const PatchRef& ref = candidates[i];
        result.report.nuclei_ms += worker_reports[i].nuclei_ms;
        result.report.blur_ms += worker_reports[i].blur_ms;
        result.report.tissue_ms += worker_reports[i].tissue_ms;
        switch (ref.reason) {
            case DiscardReason::NoNuclei: ++result.report.no_nuclei; break;
            case DiscardReason::Blurry: ++result.report.blurry; break;
            case DiscardReason::InsufficientTissue: ++result.report.insufficient_tissue; break;
            case DiscardReason::None:
                ++result.report.retained;
                result.retained.push_back(ref);
                break;
        }
    }
    return result;
}

void write_filter_report(const FilterReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    j["total"] = report.total;
    j["retained"] = report.retained;
    j["discarded"] = {{"no_nuclei", report.no_nuclei},
                      {"blurry", report.blurry},
                      {"insufficient_tissue", report.insufficient_tissue}};
    j["stage_ms"] = {{"nuclei", report.nuclei_ms},
                     {"blur", report.blur_ms},
                     {"tissue", report.tissue_ms}};
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

}  // namespace icpipe::filtering
