#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "icpipe/datagen.hpp"
#include "icpipe/errors.hpp"
#include "icpipe/rng.hpp"

using namespace icpipe;
namespace dg = icpipe::datagen;
namespace fs = std::filesystem;

namespace {

RgbImage full_base(const pyramid::PyramidImage& pyr) {
    return pyr.read_region(20.0, 0, 0, pyr.base_width(), pyr.base_height());
}

}  // namespace

TEST_CASE("shifted profiles offset the stain parameters") {
    dg::CenterProfile base;
    base.center_id = "ref";
    const dg::CenterProfile shifted =
        dg::apply_center_shift(base, {0.08, 1.2, -20, 1.5});
    CHECK(shifted.hue_offset == doctest::Approx(0.08));
    CHECK(shifted.saturation_scale == doctest::Approx(1.2));
    CHECK(shifted.brightness_offset == -20);
    CHECK(shifted.grain_scale == doctest::Approx(1.5));

    CHECK_THROWS_AS(dg::apply_center_shift(base, {0.3, 1.0, 0, 1.0}), OutOfRangeError);
    CHECK_THROWS_AS(dg::apply_center_shift(base, {0.0, 10.0, 0, 1.0}), OutOfRangeError);
}

TEST_CASE("zero delta renders identically") {
    dg::CenterProfile a;
    const dg::CenterProfile b = dg::apply_center_shift(a, {});
    dg::SlideLayout layout;
    layout.slide_side = 768;
    const dg::GeneratedSlide sa = dg::generate_slide(a, layout, 5, "S", "P");
    const dg::GeneratedSlide sb = dg::generate_slide(b, layout, 5, "S", "P");
    CHECK(full_base(sa.pyramid).data == full_base(sb.pyramid).data);
}

TEST_CASE("same seed and profile give a bit-identical pyramid") {
    dg::CenterProfile profile;
    dg::SlideLayout layout;
    layout.slide_side = 768;
    const dg::GeneratedSlide a = dg::generate_slide(profile, layout, 9, "S", "P");
    const dg::GeneratedSlide b = dg::generate_slide(profile, layout, 9, "S", "P");
    for (double zoom : pyramid::kZoomLevels) {
        const auto& lvl = a.pyramid.level(zoom);
        CHECK(a.pyramid.read_region(zoom, 0, 0, lvl.width, lvl.height).data ==
              b.pyramid.read_region(zoom, 0, 0, lvl.width, lvl.height).data);
    }
    REQUIRE(a.annotations.size() == b.annotations.size());
    for (std::size_t i = 0; i < a.annotations.size(); ++i) {
        CHECK(a.annotations[i].raw_label == b.annotations[i].raw_label);
        CHECK(a.annotations[i].polygon == b.annotations[i].polygon);
    }
}

TEST_CASE("a hue delta moves the measured mean tissue hue by that amount") {
    dg::CenterProfile ref;
    const dg::CenterProfile shifted = dg::apply_center_shift(ref, {0.08, 1.0, 0, 1.0});
    dg::SlideLayout layout;
    layout.slide_side = 1024;
    const dg::GeneratedSlide a = dg::generate_slide(ref, layout, 12, "S", "P");
    const dg::GeneratedSlide b = dg::generate_slide(shifted, layout, 12, "S", "P");
    const double ha = dg::mean_tissue_hue(full_base(a.pyramid));
    const double hb = dg::mean_tissue_hue(full_base(b.pyramid));
    double diff = hb - ha;
    diff -= std::round(diff);  // circular difference
    CHECK(std::abs(diff - 0.08) <= 0.01);
}

TEST_CASE("a brightness delta moves the mean tissue gray by that amount") {
    dg::CenterProfile ref;
    const dg::CenterProfile shifted = dg::apply_center_shift(ref, {0.0, 1.0, 15, 1.0});
    dg::SlideLayout layout;
    layout.slide_side = 1024;
    const dg::GeneratedSlide a = dg::generate_slide(ref, layout, 13, "S", "P");
    const dg::GeneratedSlide b = dg::generate_slide(shifted, layout, 13, "S", "P");

    const GrayImage ga = to_grayscale(full_base(a.pyramid));
    const GrayImage gb = to_grayscale(full_base(b.pyramid));
    double sum_a = 0, sum_b = 0;
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
        if (ga.data[i] == 255) continue;  // glass
        sum_a += ga.data[i];
        sum_b += gb.data[i];
        ++n;
    }
    REQUIRE(n > 0);
    const double shift = (sum_b - sum_a) / static_cast<double>(n);
    CHECK(std::abs(shift - 15.0) <= 2.0);
}

TEST_CASE("ic fraction zero emits no IC annotations") {
    dg::CenterProfile profile;
    dg::SlideLayout layout;
    layout.slide_side = 768;
    layout.ic_fraction = 0.0;
    const dg::GeneratedSlide slide = dg::generate_slide(profile, layout, 3, "S", "P");
    for (const auto& ann : slide.annotations) {
        CHECK(ann.raw_label.find("carcinoma") == std::string::npos);
    }
}

TEST_CASE("invalid fractions are rejected") {
    dg::CenterProfile profile;
    dg::SlideLayout layout;
    layout.epithelium_fraction = 0.05;
    layout.ic_fraction = 0.2;  // larger than the epithelium target
    CHECK_THROWS_AS(dg::generate_slide(profile, layout, 1, "S", "P"), InvalidFractionsError);
    layout.ic_fraction = -0.1;
    CHECK_THROWS_AS(dg::generate_slide(profile, layout, 1, "S", "P"), InvalidFractionsError);
}

TEST_CASE("epithelial area lands within 20% of the requested fraction") {
    dg::CenterProfile profile;
    dg::SlideLayout layout;
    layout.slide_side = 2048;
    layout.epithelium_fraction = 0.05;
    layout.ic_fraction = 0.02;
    const dg::GeneratedSlide slide = dg::generate_slide(profile, layout, 21, "S", "P");

    // epithelial area from the emitted polygons via the rasterization oracle
    std::uint64_t epi = 0;
    std::vector<std::uint8_t> any(static_cast<std::size_t>(2048) * 2048, 0);
    for (const auto& ann : slide.annotations) {
        const auto mask = dg::rasterize_polygon(ann.polygon, 2048, 2048);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask[i] && !any[i]) {
                any[i] = 1;
                ++epi;
            }
        }
    }
    // tissue area from the rendered base: anything that is not pure glass
    const RgbImage base = full_base(slide.pyramid);
    std::uint64_t tissue = 0;
    for (std::size_t i = 0; i < base.data.size(); i += 3) {
        if (!(base.data[i] == 255 && base.data[i + 1] == 255 && base.data[i + 2] == 255)) {
            ++tissue;
        }
    }
    REQUIRE(tissue > 0);
    const double measured = static_cast<double>(epi) / static_cast<double>(tissue);
    CHECK(measured >= 0.05 * 0.8);
    CHECK(measured <= 0.05 * 1.2);
}

TEST_CASE("polygons are simple and the scanline matches the point oracle") {
    dg::CenterProfile profile;
    dg::SlideLayout layout;
    layout.slide_side = 768;
    const dg::GeneratedSlide slide = dg::generate_slide(profile, layout, 8, "S", "P");
    REQUIRE(!slide.annotations.empty());
    for (const auto& ann : slide.annotations) {
        REQUIRE(ann.polygon.size() >= 3);
        const auto mask = dg::rasterize_polygon(ann.polygon, 768, 768);
        // independent per-pixel oracle over the polygon's bounding box
        std::int64_t x0 = 768, y0 = 768, x1 = 0, y1 = 0;
        for (const auto& v : ann.polygon) {
            x0 = std::min(x0, v[0]);
            y0 = std::min(y0, v[1]);
            x1 = std::max(x1, v[0]);
            y1 = std::max(y1, v[1]);
        }
        for (std::int64_t y = y0 - 1; y <= y1 + 1; ++y) {
            for (std::int64_t x = x0 - 1; x <= x1 + 1; ++x) {
                if (x < 0 || y < 0 || x >= 768 || y >= 768) continue;
                const bool oracle = dg::point_in_polygon(ann.polygon, x + 0.5, y + 0.5);
                const bool got = mask[static_cast<std::size_t>(y) * 768 + x] != 0;
                REQUIRE(oracle == got);
            }
        }
    }
}

TEST_CASE("dataset generation splits patients disjointly and persists") {
    const fs::path dir = fs::temp_directory_path() / "icpipe_dataset_test";
    fs::remove_all(dir);
    dg::CenterProfile profile;
    profile.center_id = "reference";
    dg::DatasetGenParams params;
    params.patients = 5;
    params.slides_per_patient = 2;
    params.layout.slide_side = 768;
    params.split_ratio = 0.6;
    params.seed = 77;

    const dg::DatasetManifest manifest = dg::generate_dataset(profile, params, dir, 2);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(manifest.patients.size() == 5);
    CHECK(manifest.train_slides.size() + manifest.test_slides.size() == 10);

    // patient disjointness
    std::set<std::string> train_patients, test_patients;
    for (const auto& sid : manifest.train_slides) train_patients.insert(sid.substr(0, 4));
    for (const auto& sid : manifest.test_slides) test_patients.insert(sid.substr(0, 4));
    for (const auto& p : test_patients) CHECK(train_patients.count(p) == 0);

    const dg::DatasetManifest loaded = dg::load_manifest(dir / "manifest.json");
    CHECK(loaded.center_id == "reference");
    CHECK(loaded.train_slides == manifest.train_slides);
    CHECK(loaded.patients.size() == manifest.patients.size());
    CHECK(loaded.label_groups == manifest.label_groups);
    CHECK(loaded.gen_params.seed == params.seed);

    // every IC group label is one of the three carcinoma types
    for (const auto& [raw, group] : loaded.label_groups) {
        if (group == "IC") CHECK(raw.find("carcinoma") != std::string::npos);
    }

    // pyramids load and patches build deterministically
    filtering::FilterConfig fcfg;
    const LabeledPatchSet a =
        dg::build_patch_dataset(loaded, dir, loaded.train_slides, fcfg, 256, 64, 2);
    const LabeledPatchSet b =
        dg::build_patch_dataset(loaded, dir, loaded.train_slides, fcfg, 256, 64, 1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.images[i].data == b.images[i].data);
        CHECK(a.labels[i] == b.labels[i]);
        CHECK(a.slide_ids[i] == b.slide_ids[i]);
    }

    // no patch leaks across the split
    const LabeledPatchSet test_set =
        dg::build_patch_dataset(loaded, dir, loaded.test_slides, fcfg, 256, 64, 2);
    std::set<std::string> train_pids(a.patient_ids.begin(), a.patient_ids.end());
    for (const auto& pid : test_set.patient_ids) CHECK(train_pids.count(pid) == 0);

    fs::remove_all(dir);
}

TEST_CASE("patch labels follow the center-point rule") {
    const fs::path dir = fs::temp_directory_path() / "icpipe_patchlabel_test";
    fs::remove_all(dir);
    dg::CenterProfile profile;
    profile.center_id = "c";
    dg::DatasetGenParams params;
    params.patients = 1;
    params.slides_per_patient = 1;
    params.layout.slide_side = 1024;
    params.layout.epithelium_fraction = 0.25;
    params.layout.ic_fraction = 0.12;
    params.seed = 5;
    const dg::DatasetManifest manifest = dg::generate_dataset(profile, params, dir, 1);

    filtering::FilterConfig fcfg;
    std::vector<std::string> all_slides;
    for (const auto& p : manifest.patients) {
        for (const auto& s : p.slides) all_slides.push_back(s.slide_id);
    }
    const LabeledPatchSet set =
        dg::build_patch_dataset(manifest, dir, all_slides, fcfg, 256, 64, 1);

    const dg::SlideEntry* entry = manifest.find_slide(all_slides[0]);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double cx = set.xs[i] + 128.0, cy = set.ys[i] + 128.0;
        const dg::Annotation* hit = nullptr;
        for (const auto& ann : entry->annotations) {
            if (dg::point_in_polygon(ann.polygon, cx, cy)) {
                hit = &ann;
                break;
            }
        }
        REQUIRE(hit != nullptr);
        const bool ic = hit->raw_label.find("carcinoma") != std::string::npos;
        CHECK(set.labels[i] == (ic ? 1 : 0));
    }
    fs::remove_all(dir);
}

TEST_CASE("ungrouped labels are rejected") {
    const fs::path dir = fs::temp_directory_path() / "icpipe_ungrouped_test";
    fs::remove_all(dir);
    dg::CenterProfile profile;
    dg::DatasetGenParams params;
    params.patients = 1;
    params.slides_per_patient = 1;
    params.layout.slide_side = 768;
    params.seed = 3;
    dg::DatasetManifest manifest = dg::generate_dataset(profile, params, dir, 1);
    manifest.label_groups.clear();  // simulate a grouping gap

    std::vector<std::string> slides = {manifest.patients[0].slides[0].slide_id};
    CHECK_THROWS_AS(
        dg::build_patch_dataset(manifest, dir, slides, filtering::FilterConfig{}, 256, 64, 1),
        UngroupedLabelError);
    fs::remove_all(dir);
}
