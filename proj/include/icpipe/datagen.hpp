#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "icpipe/filtering.hpp"
#include "icpipe/image.hpp"
#include "icpipe/patches.hpp"
#include "icpipe/pyramid.hpp"

namespace icpipe::datagen {

using Polygon = std::vector<std::array<std::int64_t, 2>>;  // x20 base coordinates

struct Annotation {
    std::string slide_id;
    std::string patient_id;
    Polygon polygon;  // simple, >= 3 vertices
    std::string raw_label;
};

// Stain / texture appearance of one acquisition center.
struct CenterProfile {
    std::string center_id;
    double hue_offset = 0.0;       // turns, valid in [-0.25, 0.25]
    double saturation_scale = 1.0; // valid in [0.25, 4]
    int brightness_offset = 0;     // additive per RGB channel, valid in [-64, 64]
    double grain_scale = 1.0;      // texture frequency multiplier, valid in [0.25, 4]
    std::uint64_t seed = 0;
};

struct ShiftDelta {
    double hue = 0.0;
    double saturation_scale = 1.0;
    int brightness = 0;
    double grain_scale = 1.0;
};

// Returns a profile with offset stain parameters; throws OutOfRangeError when
// the result leaves the generator-valid ranges.
CenterProfile apply_center_shift(const CenterProfile& profile, const ShiftDelta& delta);

struct SlideLayout {
    int slide_side = 3072;            // x20 base pixels, square
    double epithelium_fraction = 0.2; // nest area target, relative to tissue area
    double ic_fraction = 0.07;        // IC nest area target, relative to tissue area
};

struct GeneratedSlide {
    pyramid::PyramidImage pyramid;
    std::vector<Annotation> annotations;
};

// White background, fibrous stroma, dark textured epithelial nests, IC nests
// with denser irregular texture; every nest is emitted as a ground-truth
// polygon annotation. Deterministic for a given (profile, layout, seed).
GeneratedSlide generate_slide(const CenterProfile& profile, const SlideLayout& layout,
                              std::uint64_t slide_seed, const std::string& slide_id,
                              const std::string& patient_id);

struct SlideEntry {
    std::string slide_id;
    std::string pyramid_path;  // relative to the dataset directory
    int width = 0;
    int height = 0;
    bool ic_slide = false;
    std::vector<Annotation> annotations;
};

struct PatientEntry {
    std::string patient_id;
    std::vector<SlideEntry> slides;
};

struct DatasetGenParams {
    int patients = 24;
    int slides_per_patient = 2;  // one IC slide, one Rest slide per patient
    SlideLayout layout;
    double split_ratio = 0.8;
    std::uint64_t seed = 0;
};

struct DatasetManifest {
    std::string center_id;
    CenterProfile profile;
    std::map<std::string, std::string> label_groups;  // raw label -> "IC"/"Rest"
    std::vector<PatientEntry> patients;
    std::vector<std::string> train_slides;
    std::vector<std::string> test_slides;
    DatasetGenParams gen_params;
    std::uint64_t split_seed = 0;

    const SlideEntry* find_slide(const std::string& slide_id) const;
    bool slide_label_ic(const std::string& slide_id) const;
};

// Generates every slide (parallel across slides, per-slide streams derived
// from the dataset seed), writes pyramids under <dir>/slides/<slide_id>, and
// the manifest to <dir>/manifest.json.
DatasetManifest generate_dataset(const CenterProfile& profile, const DatasetGenParams& params,
                                 const std::filesystem::path& dir, int workers = 1);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Even-odd rasterization of a polygon into a pixel-center mask, restricted to
// a w x h grid.
std::vector<std::uint8_t> rasterize_polygon(const Polygon& poly, int width, int height);

bool point_in_polygon(const Polygon& poly, double x, double y);

double polygon_area(const Polygon& poly);  // shoelace, absolute

// Enumerates x20 patches whose center lies inside an annotated ROI, assigns
// the grouped label, applies the filter cascade, and stores the x5 context
// buffer (resized to output_side when it differs from the geometric side).
// Throws UngroupedLabelError when a raw label has no group.
LabeledPatchSet build_patch_dataset(const DatasetManifest& manifest,
                                    const std::filesystem::path& dataset_dir,
                                    const std::vector<std::string>& slide_ids,
                                    const filtering::FilterConfig& fcfg, int patch_side = 256,
                                    int output_side = 256, int workers = 1);

// Circular mean hue over pixels with saturation above a small floor;
// used to verify stain shifts.
double mean_tissue_hue(const RgbImage& img);

}  // namespace icpipe::datagen
