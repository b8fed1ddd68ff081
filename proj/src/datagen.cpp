#include "icpipe/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icpipe/color.hpp"
#include "icpipe/errors.hpp"
#include "icpipe/evaluation.hpp"
#include "icpipe/parallel.hpp"
#include "icpipe/pipeline.hpp"
#include "icpipe/rng.hpp"

namespace icpipe::datagen {

using nlohmann::json;

CenterProfile apply_center_shift(const CenterProfile& profile, const ShiftDelta& delta) {
    CenterProfile out = profile;
    out.hue_offset += delta.hue;
    out.saturation_scale *= delta.saturation_scale;
    out.brightness_offset += delta.brightness;
    out.grain_scale *= delta.grain_scale;
    if (out.hue_offset < -0.25 || out.hue_offset > 0.25 || out.saturation_scale < 0.25 ||
        out.saturation_scale > 4.0 || out.brightness_offset < -64 ||
        out.brightness_offset > 64 || out.grain_scale < 0.25 || out.grain_scale > 4.0) {
        throw OutOfRangeError("shifted center profile leaves the generator-valid ranges");
    }
    return out;
}

// ---------------------------------------------------------------------------
// polygon utilities

double polygon_area(const Polygon& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        acc += static_cast<double>(a[0]) * b[1] - static_cast<double>(b[0]) * a[1];
    }
    return std::abs(acc) * 0.5;
}

bool point_in_polygon(const Polygon& poly, double x, double y) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        const double y1 = static_cast<double>(a[1]), y2 = static_cast<double>(b[1]);
        if ((y1 <= y) != (y2 <= y)) {
            const double xi = a[0] + (y - y1) / (y2 - y1) * (b[0] - a[0]);
            if (x < xi) inside = !inside;
        }
    }
    return inside;
}

std::vector<std::uint8_t> rasterize_polygon(const Polygon& poly, int width, int height) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
        const double cy = y + 0.5;
        xs.clear();
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& a = poly[i];
            const auto& b = poly[(i + 1) % n];
            const double y1 = static_cast<double>(a[1]), y2 = static_cast<double>(b[1]);
            if ((y1 <= cy) != (y2 <= cy)) {
                xs.push_back(a[0] + (cy - y1) / (y2 - y1) * (b[0] - a[0]));
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
            // pixel covered iff xa <= x+0.5 < xb
            int x0 = static_cast<int>(std::ceil(xs[i] - 0.5));
            int x1 = static_cast<int>(std::ceil(xs[i + 1] - 0.5));
            x0 = std::max(x0, 0);
            x1 = std::min(x1, width);
            for (int x = x0; x < x1; ++x) {
                mask[static_cast<std::size_t>(y) * width + x] = 1;
            }
        }
    }
    return mask;
}

namespace {

// Star-shaped polygon: strictly increasing vertex angles keep it simple.
Polygon star_polygon(Rng& rng, double cx, double cy, double mean_radius, int vertices,
                     double radial_jitter) {
    Polygon poly;
    poly.reserve(static_cast<std::size_t>(vertices));
    constexpr double kTau = 6.28318530717958647692;
    for (int i = 0; i < vertices; ++i) {
        const double angle = kTau * (i + 0.3 * rng.uniform()) / vertices;
        const double r = mean_radius * (1.0 + radial_jitter * (2.0 * rng.uniform() - 1.0));
        poly.push_back({static_cast<std::int64_t>(std::llround(cx + r * std::cos(angle))),
                        static_cast<std::int64_t>(std::llround(cy + r * std::sin(angle)))});
    }
    return poly;
}

// ---------------------------------------------------------------------------
// value noise

double lattice_hash(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix64(seed ^ (static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL) ^
                                       (static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double value_noise(std::uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const std::int64_t ix = static_cast<std::int64_t>(fx);
    const std::int64_t iy = static_cast<std::int64_t>(fy);
    const double tx = x - fx, ty = y - fy;
    const double sx = tx * tx * (3.0 - 2.0 * tx);  // smoothstep
    const double sy = ty * ty * (3.0 - 2.0 * ty);
    const double v00 = lattice_hash(seed, ix, iy);
    const double v10 = lattice_hash(seed, ix + 1, iy);
    const double v01 = lattice_hash(seed, ix, iy + 1);
    const double v11 = lattice_hash(seed, ix + 1, iy + 1);
    const double a = v00 + (v10 - v00) * sx;
    const double b = v01 + (v11 - v01) * sx;
    return a + (b - a) * sy;  // in [0,1)
}

// two octaves, zero-centered in [-1, 1]
double fbm2(std::uint64_t seed, double x, double y) {
    const double v = value_noise(seed, x, y) + 0.5 * value_noise(seed + 1, 2.0 * x, 2.0 * y);
    return (v / 1.5) * 2.0 - 1.0;
}

// region codes in the paint mask
constexpr std::uint8_t kGlass = 0;
constexpr std::uint8_t kStroma = 1;
constexpr std::uint8_t kBenignNest = 2;
constexpr std::uint8_t kIcNest = 3;

struct NestSpec {
    Polygon polygon;
    bool ic = false;
    std::uint64_t area_px = 0;
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive bbox
};

struct TexParams {
    double h, s, v;       // base HSV
    double v_amp;         // value modulation amplitude
    double wavelength_x;  // noise wavelength in px
    double wavelength_y;
};

void paint_region(RgbImage& img, const std::vector<std::uint8_t>& region, std::uint8_t code,
                  int x0, int y0, int x1, int y1, const TexParams& tex, double grain,
                  std::uint64_t noise_seed) {
    const int w = img.width;
    const double inv_wx = grain / tex.wavelength_x;
    const double inv_wy = grain / tex.wavelength_y;
    for (int y = y0; y < y1; ++y) {
        const std::uint8_t* reg_row = region.data() + static_cast<std::size_t>(y) * w;
        std::uint8_t* px_row = img.px(0, y);
        for (int x = x0; x < x1; ++x) {
            if (reg_row[x] != code) continue;
            const double n = fbm2(noise_seed, x * inv_wx, y * inv_wy);
            Hsv hsv{tex.h, tex.s, tex.v + tex.v_amp * n};
            const auto rgb = hsv_to_rgb(hsv);
            std::uint8_t* p = px_row + 3 * x;
            p[0] = rgb[0];
            p[1] = rgb[1];
            p[2] = rgb[2];
        }
    }
}

struct DotParams {
    double density;       // target covered fraction of the nest area
    double radius_min;
    double radius_max;
    double h, s, v;       // dot color
    bool clustered;       // IC nuclei clump together
};

void paint_dots(RgbImage& img, const std::vector<std::uint8_t>& region, std::uint8_t code,
                const NestSpec& nest, const DotParams& dots, Rng& rng) {
    const double mean_r = 0.5 * (dots.radius_min + dots.radius_max);
    const double dot_area = 3.14159265358979323846 * mean_r * mean_r;
    const int n_dots = std::max(1, static_cast<int>(dots.density * static_cast<double>(nest.area_px) / dot_area));
    const int w = img.width, h = img.height;

    std::vector<std::array<double, 2>> clusters;
    if (dots.clustered) {
        const int n_clusters = std::max(1, n_dots / 12);
        for (int i = 0; i < n_clusters; ++i) {
            clusters.push_back({rng.uniform(nest.min_x, nest.max_x + 1.0),
                                rng.uniform(nest.min_y, nest.max_y + 1.0)});
        }
    }

    const double cluster_spread = 4.0 * dots.radius_max;
    for (int d = 0; d < n_dots; ++d) {
        double cx, cy;
        if (dots.clustered) {
            const auto& c = clusters[static_cast<std::size_t>(rng.uniform_int(clusters.size()))];
            cx = c[0] + cluster_spread * rng.normal();
            cy = c[1] + cluster_spread * rng.normal();
        } else {
            cx = rng.uniform(nest.min_x, nest.max_x + 1.0);
            cy = rng.uniform(nest.min_y, nest.max_y + 1.0);
        }
        const double r = rng.uniform(dots.radius_min, dots.radius_max);
        const double v_jitter = rng.uniform(-0.05, 0.05);
        const auto rgb = hsv_to_rgb(Hsv{dots.h, dots.s, dots.v + v_jitter});

        const int bx0 = std::max(0, static_cast<int>(std::floor(cx - r)));
        const int by0 = std::max(0, static_cast<int>(std::floor(cy - r)));
        const int bx1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
        const int by1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
        const double r2 = r * r;
        for (int y = by0; y <= by1; ++y) {
            for (int x = bx0; x <= bx1; ++x) {
                if (region[static_cast<std::size_t>(y) * w + x] != code) continue;
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                if (dx * dx + dy * dy > r2) continue;
                std::uint8_t* p = img.px(x, y);
                p[0] = rgb[0];
                p[1] = rgb[1];
                p[2] = rgb[2];
            }
        }
    }
}

void apply_stain(RgbImage& img, const CenterProfile& profile) {
    const bool hs = profile.hue_offset != 0.0 || profile.saturation_scale != 1.0;
    const bool br = profile.brightness_offset != 0;
    if (!hs && !br) return;
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        std::uint8_t r = img.data[i], g = img.data[i + 1], b = img.data[i + 2];
        if (hs) {
            Hsv hsv = rgb_to_hsv(r, g, b);
            hsv.h += profile.hue_offset;
            hsv.s = std::clamp(hsv.s * profile.saturation_scale, 0.0, 1.0);
            const auto rgb = hsv_to_rgb(hsv);
            r = rgb[0];
            g = rgb[1];
            b = rgb[2];
        }
        if (br) {
            r = clamp_u8(r + profile.brightness_offset);
            g = clamp_u8(g + profile.brightness_offset);
            b = clamp_u8(b + profile.brightness_offset);
        }
        img.data[i] = r;
        img.data[i + 1] = g;
        img.data[i + 2] = b;
    }
}

const char* draw_ic_label(Rng& rng) {
    const double u = rng.uniform();
    if (u < 0.70) return "invasive_ductal_carcinoma";
    if (u < 0.95) return "invasive_lobular_carcinoma";
    return "mucinous_carcinoma";
}

const char* draw_benign_label(Rng& rng) {
    return rng.uniform() < 0.5 ? "fibroadenoma" : "normal_epithelium";
}

}  // namespace

GeneratedSlide generate_slide(const CenterProfile& profile, const SlideLayout& layout,
                              std::uint64_t slide_seed, const std::string& slide_id,
                              const std::string& patient_id) {
    if (layout.epithelium_fraction < 0.0 || layout.epithelium_fraction > 1.0 ||
        layout.ic_fraction < 0.0 || layout.ic_fraction > 1.0 ||
        layout.ic_fraction > layout.epithelium_fraction) {
        throw InvalidFractionsError("fractions must lie in [0,1] with ic <= epithelium");
    }
    const int side = layout.slide_side;
    Rng geometry_rng(mix_seed(slide_seed, 0x6E0ULL));
    Rng label_rng(mix_seed(slide_seed, 0x1ABE1ULL));
    Rng dot_rng(mix_seed(slide_seed, 0xD07ULL));
    const std::uint64_t noise_seed = mix_seed(slide_seed, 0x7E87ULL);

    // tissue piece: one large star polygon around the slide center
    const Polygon tissue_poly = star_polygon(geometry_rng, side * 0.5, side * 0.5, side * 0.44,
                                             24, 0.15);
    std::vector<std::uint8_t> region = rasterize_polygon(tissue_poly, side, side);
    std::uint64_t tissue_area = 0;
    for (std::uint8_t& r : region) {
        if (r) {
            r = kStroma;
            ++tissue_area;
        }
    }

    // nest placement: IC nests first until their area target, then benign
    const double epi_target = layout.epithelium_fraction * static_cast<double>(tissue_area);
    const double ic_target = layout.ic_fraction * static_cast<double>(tissue_area);
    const double r_min = side / 24.0, r_max = side / 9.0;

    std::vector<NestSpec> nests;
    double epi_area = 0.0, ic_area = 0.0;
    int failures = 0;
    double shrink = 1.0;  // adapts the draw range as free stroma gets tight
    while (epi_area < epi_target && failures < 600) {
        const bool want_ic = ic_area < ic_target;
        double radius = r_min + (geometry_rng.uniform(r_min, r_max) - r_min) * shrink;
        const double remaining = (want_ic ? ic_target - ic_area : epi_target - epi_area);
        const double r_fit = std::sqrt(std::max(remaining, 0.0) / (3.14159265 * 0.85));
        radius = std::min(radius, std::max(r_fit, r_min));
        const double cx = geometry_rng.uniform(radius, side - radius);
        const double cy = geometry_rng.uniform(radius, side - radius);
        Polygon poly = star_polygon(geometry_rng, cx, cy, radius,
                                    10 + static_cast<int>(geometry_rng.uniform_int(5)), 0.30);

        // bbox + strict containment in untouched stroma
        std::int64_t mnx = poly[0][0], mxx = poly[0][0], mny = poly[0][1], mxy = poly[0][1];
        for (const auto& v : poly) {
            mnx = std::min(mnx, v[0]);
            mxx = std::max(mxx, v[0]);
            mny = std::min(mny, v[1]);
            mxy = std::max(mxy, v[1]);
        }
        if (mnx < 0 || mny < 0 || mxx >= side || mxy >= side) {
            ++failures;
            shrink = std::max(0.35, shrink * 0.95);
            continue;
        }
        const std::vector<std::uint8_t> nest_mask = rasterize_polygon(poly, side, side);
        bool ok = true;
        std::uint64_t area = 0;
        for (int y = static_cast<int>(mny); y <= static_cast<int>(mxy) && ok; ++y) {
            for (int x = static_cast<int>(mnx); x <= static_cast<int>(mxx); ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * side + x;
                if (!nest_mask[idx]) continue;
                if (region[idx] != kStroma) {
                    ok = false;
                    break;
                }
                ++area;
            }
        }
        if (!ok || area == 0) {
            ++failures;
            shrink = std::max(0.35, shrink * 0.95);
            continue;
        }
        NestSpec nest;
        nest.polygon = std::move(poly);
        nest.ic = want_ic;
        nest.area_px = area;
        nest.min_x = static_cast<int>(mnx);
        nest.min_y = static_cast<int>(mny);
        nest.max_x = static_cast<int>(mxx);
        nest.max_y = static_cast<int>(mxy);
        const std::uint8_t code = want_ic ? kIcNest : kBenignNest;
        for (int y = nest.min_y; y <= nest.max_y; ++y) {
            for (int x = nest.min_x; x <= nest.max_x; ++x) {
                const std::size_t idx = static_cast<std::size_t>(y) * side + x;
                if (nest_mask[idx]) region[idx] = code;
            }
        }
        epi_area += static_cast<double>(area);
        if (want_ic) ic_area += static_cast<double>(area);
        nests.push_back(std::move(nest));
        shrink = std::min(1.0, shrink * 1.03);
    }

    // texture rendering
    RgbImage img = RgbImage::filled(side, side, 255, 255, 255);
    const double grain = profile.grain_scale;
    const TexParams stroma_tex{0.80, 0.10, 0.88, 0.045, 36.0, 9.0};  // fibrous streaks
    const TexParams benign_tex{0.76, 0.22, 0.70, 0.050, 13.0, 13.0};
    const TexParams ic_tex{0.72, 0.48, 0.36, 0.120, 4.0, 4.0};
    paint_region(img, region, kStroma, 0, 0, side, side, stroma_tex, grain, noise_seed);
    paint_region(img, region, kBenignNest, 0, 0, side, side, benign_tex, grain, noise_seed + 17);
    paint_region(img, region, kIcNest, 0, 0, side, side, ic_tex, grain, noise_seed + 29);

    const DotParams benign_dots{0.16, 2.0, 4.5, 0.67, 0.50, 0.45, false};
    const DotParams ic_dots{0.30, 2.5, 6.0, 0.66, 0.72, 0.18, true};
    for (const NestSpec& nest : nests) {
        paint_dots(img, region, nest.ic ? kIcNest : kBenignNest, nest,
                   nest.ic ? ic_dots : benign_dots, dot_rng);
    }

    apply_stain(img, profile);

    GeneratedSlide out;
    out.pyramid = pyramid::PyramidImage::build(img);
    for (const NestSpec& nest : nests) {
        Annotation ann;
        ann.slide_id = slide_id;
        ann.patient_id = patient_id;
        ann.polygon = nest.polygon;
        ann.raw_label = nest.ic ? draw_ic_label(label_rng) : draw_benign_label(label_rng);
        out.annotations.push_back(std::move(ann));
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset assembly

namespace {

std::map<std::string, std::string> default_label_groups() {
    return {{"invasive_ductal_carcinoma", "IC"},
            {"invasive_lobular_carcinoma", "IC"},
            {"mucinous_carcinoma", "IC"},
            {"fibroadenoma", "Rest"},
            {"normal_epithelium", "Rest"}};
}

}  // namespace

const SlideEntry* DatasetManifest::find_slide(const std::string& slide_id) const {
    for (const PatientEntry& p : patients) {
        for (const SlideEntry& s : p.slides) {
            if (s.slide_id == slide_id) return &s;
        }
    }
    return nullptr;
}

bool DatasetManifest::slide_label_ic(const std::string& slide_id) const {
    const SlideEntry* s = find_slide(slide_id);
    if (s == nullptr) throw DataError("unknown slide id: " + slide_id);
    return s->ic_slide;
}

DatasetManifest generate_dataset(const CenterProfile& profile, const DatasetGenParams& params,
                                 const std::filesystem::path& dir, int workers) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "slides");

    struct Job {
        std::string patient_id;
        std::string slide_id;
        SlideLayout layout;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (int p = 0; p < params.patients; ++p) {
        char pid[16];
        std::snprintf(pid, sizeof(pid), "P%03d", p);
        for (int s = 0; s < params.slides_per_patient; ++s) {
            Job job;
            job.patient_id = pid;
            job.slide_id = std::string(pid) + "_S" + std::to_string(s);
            job.layout = params.layout;
            if (s % 2 == 1) job.layout.ic_fraction = 0.0;  // every second slide is Rest-only
            job.seed = mix_seed(params.seed, jobs.size());
            jobs.push_back(std::move(job));
        }
    }

    std::vector<SlideEntry> entries(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Job& job = jobs[i];
            GeneratedSlide slide =
                generate_slide(profile, job.layout, job.seed, job.slide_id, job.patient_id);
            const fs::path slide_dir = dir / "slides" / job.slide_id;
            slide.pyramid.save(slide_dir);
            SlideEntry entry;
            entry.slide_id = job.slide_id;
            entry.pyramid_path = "slides/" + job.slide_id;
            entry.width = slide.pyramid.base_width();
            entry.height = slide.pyramid.base_height();
            entry.annotations = std::move(slide.annotations);
            for (const Annotation& a : entry.annotations) {
                if (a.raw_label.find("carcinoma") != std::string::npos) entry.ic_slide = true;
            }
            entries[i] = std::move(entry);
        }
    });

    DatasetManifest manifest;
    manifest.center_id = profile.center_id;
    manifest.profile = profile;
    manifest.label_groups = default_label_groups();
    manifest.gen_params = params;
    manifest.split_seed = mix_seed(params.seed, 0x5B117ULL);

    std::size_t idx = 0;
    for (int p = 0; p < params.patients; ++p) {
        PatientEntry pe;
        pe.patient_id = jobs[idx].patient_id;
        for (int s = 0; s < params.slides_per_patient; ++s) pe.slides.push_back(std::move(entries[idx++]));
        manifest.patients.push_back(std::move(pe));
    }

    std::vector<evaluation::PatientFolder> folders;
    for (const PatientEntry& pe : manifest.patients) {
        evaluation::PatientFolder f;
        f.patient_id = pe.patient_id;
        for (const SlideEntry& se : pe.slides) f.slide_ids.push_back(se.slide_id);
        folders.push_back(std::move(f));
    }
    const evaluation::SplitResult split =
        evaluation::patient_split(folders, params.split_ratio, manifest.split_seed);
    manifest.train_slides = split.train_slides;
    manifest.test_slides = split.test_slides;

    save_manifest(manifest, dir / "manifest.json");
    return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    json j;
    j["format_version"] = 1;
    j["center"] = {{"id", manifest.profile.center_id},
                   {"hue_offset", manifest.profile.hue_offset},
                   {"saturation_scale", manifest.profile.saturation_scale},
                   {"brightness_offset", manifest.profile.brightness_offset},
                   {"grain_scale", manifest.profile.grain_scale},
                   {"seed", manifest.profile.seed}};
    j["label_groups"] = manifest.label_groups;
    j["gen_params"] = {{"patients", manifest.gen_params.patients},
                       {"slides_per_patient", manifest.gen_params.slides_per_patient},
                       {"slide_side", manifest.gen_params.layout.slide_side},
                       {"epithelium_fraction", manifest.gen_params.layout.epithelium_fraction},
                       {"ic_fraction", manifest.gen_params.layout.ic_fraction},
                       {"split_ratio", manifest.gen_params.split_ratio},
                       {"seed", manifest.gen_params.seed}};
    j["split"] = {{"seed", manifest.split_seed},
                  {"train_slides", manifest.train_slides},
                  {"test_slides", manifest.test_slides}};
    json patients = json::array();
    for (const PatientEntry& pe : manifest.patients) {
        json slides = json::array();
        for (const SlideEntry& se : pe.slides) {
            json anns = json::array();
            for (const Annotation& a : se.annotations) {
                json poly = json::array();
                for (const auto& v : a.polygon) poly.push_back({v[0], v[1]});
                anns.push_back({{"label", a.raw_label}, {"polygon", poly}});
            }
            slides.push_back({{"id", se.slide_id},
                              {"pyramid", se.pyramid_path},
                              {"width", se.width},
                              {"height", se.height},
                              {"ic_slide", se.ic_slide},
                              {"annotations", anns}});
        }
        patients.push_back({{"id", pe.patient_id}, {"slides", slides}});
    }
    j["patients"] = patients;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing dataset manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("bad dataset manifest: " + std::string(e.what()));
    }
    if (j.value("format_version", 0) != 1) {
        throw DataError("unsupported dataset manifest version in " + path.string());
    }
    DatasetManifest m;
    const json& c = j.at("center");
    m.profile.center_id = c.at("id").get<std::string>();
    m.profile.hue_offset = c.at("hue_offset").get<double>();
    m.profile.saturation_scale = c.at("saturation_scale").get<double>();
    m.profile.brightness_offset = c.at("brightness_offset").get<int>();
    m.profile.grain_scale = c.at("grain_scale").get<double>();
    m.profile.seed = c.at("seed").get<std::uint64_t>();
    m.center_id = m.profile.center_id;
    m.label_groups = j.at("label_groups").get<std::map<std::string, std::string>>();
    const json& g = j.at("gen_params");
    m.gen_params.patients = g.at("patients").get<int>();
    m.gen_params.slides_per_patient = g.at("slides_per_patient").get<int>();
    m.gen_params.layout.slide_side = g.at("slide_side").get<int>();
    m.gen_params.layout.epithelium_fraction = g.at("epithelium_fraction").get<double>();
    m.gen_params.layout.ic_fraction = g.at("ic_fraction").get<double>();
    m.gen_params.split_ratio = g.at("split_ratio").get<double>();
    m.gen_params.seed = g.at("seed").get<std::uint64_t>();
    m.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    m.train_slides = j.at("split").at("train_slides").get<std::vector<std::string>>();
    m.test_slides = j.at("split").at("test_slides").get<std::vector<std::string>>();
    for (const json& jp : j.at("patients")) {
        PatientEntry pe;
        pe.patient_id = jp.at("id").get<std::string>();
        for (const json& js : jp.at("slides")) {
            SlideEntry se;
            se.slide_id = js.at("id").get<std::string>();
            se.pyramid_path = js.at("pyramid").get<std::string>();
            se.width = js.at("width").get<int>();
            se.height = js.at("height").get<int>();
            se.ic_slide = js.at("ic_slide").get<bool>();
            for (const json& ja : js.at("annotations")) {
                Annotation a;
                a.slide_id = se.slide_id;
                a.patient_id = pe.patient_id;
                a.raw_label = ja.at("label").get<std::string>();
                for (const json& jv : ja.at("polygon")) {
                    a.polygon.push_back({jv.at(0).get<std::int64_t>(), jv.at(1).get<std::int64_t>()});
                }
                se.annotations.push_back(std::move(a));
            }
            pe.slides.push_back(std::move(se));
        }
        m.patients.push_back(std::move(pe));
    }
    return m;
}

LabeledPatchSet build_patch_dataset(const DatasetManifest& manifest,
                                    const std::filesystem::path& dataset_dir,
                                    const std::vector<std::string>& slide_ids,
                                    const filtering::FilterConfig& fcfg, int patch_side,
                                    int output_side, int workers) {
    std::vector<LabeledPatchSet> per_slide(slide_ids.size());
    parallel_for(slide_ids.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t si = begin; si < end; ++si) {
            const SlideEntry* entry = manifest.find_slide(slide_ids[si]);
            if (entry == nullptr) throw DataError("slide not in manifest: " + slide_ids[si]);
            const pyramid::PyramidImage pyr =
                pyramid::PyramidImage::load(dataset_dir / entry->pyramid_path);

            const std::string* patient_id = nullptr;
            for (const PatientEntry& pe : manifest.patients) {
                for (const SlideEntry& se : pe.slides) {
                    if (se.slide_id == entry->slide_id) patient_id = &pe.patient_id;
                }
            }

            LabeledPatchSet& set = per_slide[si];
            const int cols = (entry->width + patch_side - 1) / patch_side;
            const int rows = (entry->height + patch_side - 1) / patch_side;
            filtering::FilterReport scratch_report;
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    const double cx = c * patch_side + patch_side / 2.0;
                    const double cy = r * patch_side + patch_side / 2.0;
                    const Annotation* hit = nullptr;
                    for (const Annotation& a : entry->annotations) {
                        if (point_in_polygon(a.polygon, cx, cy)) {
                            hit = &a;
                            break;
                        }
                    }
                    if (hit == nullptr) continue;  // only annotated regions carry labels
                    const auto group = manifest.label_groups.find(hit->raw_label);
                    if (group == manifest.label_groups.end()) {
                        throw UngroupedLabelError("no group for raw label: " + hit->raw_label);
                    }
                    const int label = group->second == "IC" ? 1 : 0;

                    const RgbImage x20_patch =
                        pyr.read_region(20.0, c * patch_side, r * patch_side, patch_side, patch_side);
                    const auto [status, reason] =
                        filtering::run_cascade(x20_patch, fcfg, nullptr, scratch_report);
                    if (status != pyramid::PatchStatus::Retained) continue;

                    pyramid::PatchRef ref{20.0, c * patch_side, r * patch_side, patch_side,
                                          pyramid::PatchStatus::Retained,
                                          pyramid::DiscardReason::None};
                    RgbImage context = pipeline::extract_context_patch(pyr, ref);
                    if (output_side != patch_side) {
                        context = downsample(context, Rational{patch_side / output_side, 1});
                    }
                    set.append(std::move(context), label, *patient_id, entry->slide_id,
                               ref.x, ref.y);
                }
            }
        }
    });

    LabeledPatchSet all;
    for (LabeledPatchSet& s : per_slide) all.append_all(std::move(s));
    return all;
}

double mean_tissue_hue(const RgbImage& img) {
    // circular mean over sufficiently saturated pixels
    double sum_sin = 0.0, sum_cos = 0.0;
    std::uint64_t n = 0;
    constexpr double kTau = 6.28318530717958647692;
    for (std::size_t i = 0; i < img.data.size(); i += 3) {
        const Hsv hsv = rgb_to_hsv(img.data[i], img.data[i + 1], img.data[i + 2]);
        if (hsv.s < 0.05) continue;
        sum_sin += std::sin(hsv.h * kTau);
        sum_cos += std::cos(hsv.h * kTau);
        ++n;
    }
    if (n == 0) return 0.0;
    double h = std::atan2(sum_sin, sum_cos) / kTau;
    if (h < 0.0) h += 1.0;
    return h;
}

}  // namespace icpipe::datagen
