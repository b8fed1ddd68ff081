#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icpipe/datagen.hpp"
#include "icpipe/errors.hpp"
#include "icpipe/pipeline.hpp"
#include "icpipe/rng.hpp"

using namespace icpipe;
namespace pl = icpipe::pipeline;

namespace {

// single depth-zero tree: every patch scores the same constant
model::HybridModel stub_model(double constant_score, double p0 = 0.5,
                              double slide_threshold = 0.5) {
    model::HybridModel m;
    model::ConvNetConfig ncfg;
    ncfg.input_side = 64;
    m.net = model::ConvNet(ncfg);
    m.net.init_he(1);
    model::Tree tree;
    tree.nodes.push_back({-1, 0.0, 0, 0, constant_score});
    m.forest.cfg.n_trees = 1;
    m.forest.feature_dim = 32;
    m.forest.trees.push_back(tree);
    m.p0 = p0;
    m.slide_threshold = slide_threshold;
    m.context_side = 256;
    return m;
}

datagen::GeneratedSlide textured_slide(std::uint64_t seed, int side = 2048) {
    datagen::CenterProfile profile;
    datagen::SlideLayout layout;
    layout.slide_side = side;
    layout.epithelium_fraction = 0.18;
    layout.ic_fraction = 0.08;
    return datagen::generate_slide(profile, layout, seed, "S0", "P0");
}

}  // namespace

TEST_CASE("context patch geometry matches the concentric x5 mapping") {
    const auto pyr = pyramid::PyramidImage::build(RgbImage::filled(8192, 8192, 10, 20, 30));
    pyramid::PatchRef ref{20.0, 4096, 4096, 256, pyramid::PatchStatus::Retained,
                          pyramid::DiscardReason::None};
    const RgbImage ctx = pl::extract_context_patch(pyr, ref);
    REQUIRE(ctx.width == 256);
    REQUIRE(ctx.height == 256);
    // base center (4224, 4224) -> x5 center (1056, 1056) -> top-left (928, 928)
    const RgbImage direct = pyr.read_region(5.0, 928, 928, 256, 256);
    CHECK(ctx.data == direct.data);
}

TEST_CASE("context patches at the origin are white-padded in the corners") {
    const auto pyr = pyramid::PyramidImage::build(RgbImage::filled(4096, 4096, 10, 20, 30));
    pyramid::PatchRef ref{20.0, 0, 0, 256, pyramid::PatchStatus::Retained,
                          pyramid::DiscardReason::None};
    const RgbImage ctx = pl::extract_context_patch(pyr, ref);
    CHECK(ctx.px(0, 0)[0] == 255);      // x5 top-left is (-96, -96)
    CHECK(ctx.px(0, 0)[1] == 255);
    CHECK(ctx.px(128, 128)[0] == 10);   // interior shows the level content
}

TEST_CASE("the x20 footprint sits in the central quarter of the context footprint") {
    // x20 patch spans [x, x+256) in base pixels; the context covers a
    // concentric 1024 span, so the patch occupies its central quarter
    for (const int x : {0, 256, 1024, 4096}) {
        const int side = 256;
        const int x5_origin = (2 * x + side) / 8 - side / 2;
        const int ctx_base_origin = 4 * x5_origin;
        CHECK(ctx_base_origin + 2 * side == x + side / 2);  // centers coincide
        // central quarter of the 4*side footprint: [3/8, 5/8] of the span
        CHECK(x == ctx_base_origin + 3 * side / 2);
        CHECK(x + side == ctx_base_origin + 5 * side / 2);
    }
}

TEST_CASE("s_ic follows the strict-threshold formula") {
    const std::vector<double> scores = {0.9, 0.8, 0.3};
    CHECK(pl::compute_s_ic(scores, 0.5, 3) == doctest::Approx(1.7 / 3.0).epsilon(1e-12));
    // strict inequality: a score equal to p0 does not count
    const std::vector<double> tie = {0.5, 0.5};
    CHECK(pl::compute_s_ic(tie, 0.5, 2) == 0.0);
    const std::vector<double> none;
    CHECK(pl::compute_s_ic(none, 0.5, 0) == 0.0);
}

TEST_CASE("a blank slide yields the flagged empty result") {
    const auto pyr = pyramid::PyramidImage::build(RgbImage::filled(1024, 1024, 255, 255, 255));
    const auto model = stub_model(1.0);
    const pl::SlideResult result = pl::score_slide(pyr, model, {}, "blank");
    CHECK(result.no_epithelium);
    CHECK(result.n_retained == 0);
    CHECK(result.s_ic == 0.0);
    CHECK((result.predicted == evaluation::SlideClass::Rest));
}

TEST_CASE("constant-score stubs drive the slide class") {
    const datagen::GeneratedSlide slide = textured_slide(41);
    pl::PipelineConfig cfg;
    cfg.workers = 2;

    const pl::SlideResult zero = pl::score_slide(slide.pyramid, stub_model(0.0), cfg, "s");
    REQUIRE(zero.n_retained > 0);
    CHECK(zero.s_ic == 0.0);
    CHECK((zero.predicted == evaluation::SlideClass::Rest));

    const pl::SlideResult one = pl::score_slide(slide.pyramid, stub_model(1.0), cfg, "s");
    CHECK(one.s_ic == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((one.predicted == evaluation::SlideClass::IC));
}

TEST_CASE("inference touches exactly the retained patches") {
    const datagen::GeneratedSlide slide = textured_slide(42);
    pl::PipelineConfig cfg;
    cfg.workers = 2;
    const pl::SlideResult result = pl::score_slide(slide.pyramid, stub_model(0.7), cfg, "s");
    CHECK(result.inference_patch_reads == result.n_retained);
    CHECK(result.patch_scores.size() == result.n_retained);
    CHECK(result.filter_report.retained == result.n_retained);
    CHECK(result.timings.filter_ms + result.timings.inference_ms <=
          result.timings.total_ms + 1e-6);
}

TEST_CASE("slide scoring is invariant under the worker count") {
    const datagen::GeneratedSlide slide = textured_slide(43);
    const auto model = stub_model(0.9);
    const pl::SlideResult a = pl::score_slide(slide.pyramid, model, {{}, {}, 1}, "s");
    const pl::SlideResult b = pl::score_slide(slide.pyramid, model, {{}, {}, 4}, "s");
    REQUIRE(a.patch_scores.size() == b.patch_scores.size());
    for (std::size_t i = 0; i < a.patch_scores.size(); ++i) {
        CHECK(a.patch_scores[i].score == b.patch_scores[i].score);
        CHECK(a.patch_scores[i].ref.x == b.patch_scores[i].ref.x);
    }
    CHECK(a.s_ic == b.s_ic);
    CHECK((a.predicted == b.predicted));
}

TEST_CASE("s_ic is monotone in every patch score") {
    std::vector<double> scores = {0.2, 0.6, 0.9};
    const double base = pl::compute_s_ic(scores, 0.5, 3);
    scores[0] = 0.7;  // raise one score
    CHECK(pl::compute_s_ic(scores, 0.5, 3) >= base);
    scores[1] = 0.95;
    CHECK(pl::compute_s_ic(scores, 0.5, 3) >= base);
}

TEST_CASE("heatmap colors follow the documented table") {
    CHECK(pl::heatmap_color(0.0) == std::array<std::uint8_t, 3>{0, 0, 255});
    CHECK(pl::heatmap_color(1.0) == std::array<std::uint8_t, 3>{255, 0, 0});
    CHECK(pl::heatmap_color(0.5) == std::array<std::uint8_t, 3>{128, 0, 127});
}

TEST_CASE("heatmap paints retained footprints and leaves the rest transparent") {
    const datagen::GeneratedSlide slide = textured_slide(44, 1024);
    pl::PipelineConfig cfg;
    const pl::SlideResult result = pl::score_slide(slide.pyramid, stub_model(0.0), cfg, "s");
    REQUIRE(result.n_retained > 0);
    const RgbaImage overlay = pl::render_heatmap(result, slide.pyramid);
    const auto& lvl = slide.pyramid.level(2.5);
    CHECK(overlay.width == lvl.width);
    CHECK(overlay.height == lvl.height);

    std::uint64_t painted = 0;
    for (int y = 0; y < overlay.height; ++y) {
        for (int x = 0; x < overlay.width; ++x) {
            const auto* p = overlay.px(x, y);
            if (p[3] == 0) continue;
            ++painted;
            CHECK(p[0] == 0);    // score 0 -> pure blue
            CHECK(p[2] == 255);
            CHECK(p[3] == 128);
        }
    }
    // every retained patch covers a 32x32 footprint at x2.5 (clipped at edges)
    CHECK(painted <= result.n_retained * 32 * 32);
    CHECK(painted >= result.n_retained * 32 * 32 / 2);
}
