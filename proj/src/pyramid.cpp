#include "icpipe/pyramid.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icpipe/errors.hpp"
#include "icpipe/png_io.hpp"

namespace icpipe::pyramid {

using nlohmann::json;

Rational zoom_factor(double zoom) {
    if (zoom == 20.0) return {1, 1};
    if (zoom == 5.0) return {4, 1};
    if (zoom == 2.5) return {8, 1};
    if (zoom == 1.0) return {20, 1};
    throw UnknownZoomError("unsupported zoom factor: " + std::to_string(zoom));
}

int level_dim(int base_dim, double zoom) {
    const Rational f = zoom_factor(zoom);
    return downsample_dim(base_dim, f);
}

std::string zoom_label(double zoom) {
    if (zoom == 2.5) return "2.5";
    return std::to_string(static_cast<int>(zoom));
}

const char* discard_reason_name(DiscardReason r) {
    switch (r) {
        case DiscardReason::NoNuclei: return "no_nuclei";
        case DiscardReason::Blurry: return "blurry";
        case DiscardReason::InsufficientTissue: return "insufficient_tissue";
        case DiscardReason::None: break;
    }
    return "none";
}

namespace {

Level make_level(const RgbImage& img, double zoom, int tile_size) {
    Level lvl;
    lvl.zoom = zoom;
    lvl.width = img.width;
    lvl.height = img.height;
    lvl.tile_cols = (img.width + tile_size - 1) / tile_size;
    lvl.tile_rows = (img.height + tile_size - 1) / tile_size;
    lvl.tiles.reserve(static_cast<std::size_t>(lvl.tile_cols) * lvl.tile_rows);
    for (int tr = 0; tr < lvl.tile_rows; ++tr) {
        for (int tc = 0; tc < lvl.tile_cols; ++tc) {
            RgbImage tile = RgbImage::filled(tile_size, tile_size, 255, 255, 255);
            const int x0 = tc * tile_size;
            const int y0 = tr * tile_size;
            const int copy_w = std::min(tile_size, img.width - x0);
            const int copy_h = std::min(tile_size, img.height - y0);
            for (int y = 0; y < copy_h; ++y) {
                std::memcpy(tile.px(0, y), img.px(x0, y0 + y),
                            static_cast<std::size_t>(copy_w) * 3);
            }
            lvl.tiles.push_back(std::move(tile));
        }
    }
    return lvl;
}

}  // namespace

PyramidImage PyramidImage::build(const RgbImage& base, int tile_size) {
    if (base.empty()) throw DataError("build requires a non-empty base image");
    if (tile_size <= 0 || (tile_size & (tile_size - 1)) != 0) {
        throw DataError("tile_size must be a positive power of two");
    }
    PyramidImage pyr;
    pyr.base_width_ = base.width;
    pyr.base_height_ = base.height;
    pyr.tile_size_ = tile_size;
    for (double zoom : kZoomLevels) {
        const Rational f = zoom_factor(zoom);
        if (f.num == 1) {
            pyr.levels_.push_back(make_level(base, zoom, tile_size));
        } else {
            pyr.levels_.push_back(make_level(downsample(base, f), zoom, tile_size));
        }
    }
    return pyr;
}

bool PyramidImage::has_level(double zoom) const {
    for (const Level& l : levels_) {
        if (l.zoom == zoom) return true;
    }
    return false;
}

const Level& PyramidImage::level(double zoom) const {
    for (const Level& l : levels_) {
        if (l.zoom == zoom) return l;
    }
    throw UnknownZoomError("no such zoom level: " + std::to_string(zoom));
}

RgbImage PyramidImage::read_region(double zoom, int x, int y, int w, int h) const {
    if (w <= 0 || h <= 0) throw DataError("read_region requires positive dimensions");
    const Level& lvl = level(zoom);
    RgbImage out = RgbImage::filled(w, h, 255, 255, 255);

    const int x0 = std::max(x, 0);
    const int y0 = std::max(y, 0);
    const int x1 = std::min(x + w, lvl.width);
    const int y1 = std::min(y + h, lvl.height);
    if (x0 >= x1 || y0 >= y1) return out;

    const int ts = tile_size_;
    for (int ty = y0 / ts; ty <= (y1 - 1) / ts; ++ty) {
        for (int tx = x0 / ts; tx <= (x1 - 1) / ts; ++tx) {
            const RgbImage& tile = lvl.tiles[static_cast<std::size_t>(ty) * lvl.tile_cols + tx];
            const int rx0 = std::max(x0, tx * ts);
            const int ry0 = std::max(y0, ty * ts);
            const int rx1 = std::min(x1, (tx + 1) * ts);
            const int ry1 = std::min(y1, (ty + 1) * ts);
            for (int yy = ry0; yy < ry1; ++yy) {
                std::memcpy(out.px(rx0 - x, yy - y), tile.px(rx0 - tx * ts, yy - ty * ts),
                            static_cast<std::size_t>(rx1 - rx0) * 3);
            }
        }
    }
    return out;
}

void PyramidImage::save(const std::filesystem::path& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = 1;
    manifest["base_width"] = base_width_;
    manifest["base_height"] = base_height_;
    manifest["tile_size"] = tile_size_;
    json jlevels = json::array();
    for (const Level& lvl : levels_) {
        jlevels.push_back({{"zoom", lvl.zoom}, {"width", lvl.width}, {"height", lvl.height}});
        const fs::path lvl_dir = dir / ("level_" + zoom_label(lvl.zoom));
        fs::create_directories(lvl_dir);
        for (int tr = 0; tr < lvl.tile_rows; ++tr) {
            for (int tc = 0; tc < lvl.tile_cols; ++tc) {
                const fs::path tile_path =
                    lvl_dir / ("tile_" + std::to_string(tc) + "_" + std::to_string(tr) + ".png");
                write_png(tile_path, lvl.tiles[static_cast<std::size_t>(tr) * lvl.tile_cols + tc]);
            }
        }
    }
    manifest["levels"] = jlevels;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

PyramidImage PyramidImage::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("missing pyramid manifest: " + (dir / "manifest.json").string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("bad pyramid manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1) {
        throw DataError("unsupported pyramid format version in " + dir.string());
    }
    PyramidImage pyr;
    pyr.base_width_ = manifest.at("base_width").get<int>();
    pyr.base_height_ = manifest.at("base_height").get<int>();
    pyr.tile_size_ = manifest.at("tile_size").get<int>();
    for (const json& jl : manifest.at("levels")) {
        Level lvl;
        lvl.zoom = jl.at("zoom").get<double>();
        lvl.width = jl.at("width").get<int>();
        lvl.height = jl.at("height").get<int>();
        lvl.tile_cols = (lvl.width + pyr.tile_size_ - 1) / pyr.tile_size_;
        lvl.tile_rows = (lvl.height + pyr.tile_size_ - 1) / pyr.tile_size_;
        const fs::path lvl_dir = dir / ("level_" + zoom_label(lvl.zoom));
        for (int tr = 0; tr < lvl.tile_rows; ++tr) {
            for (int tc = 0; tc < lvl.tile_cols; ++tc) {
                const fs::path tile_path =
                    lvl_dir / ("tile_" + std::to_string(tc) + "_" + std::to_string(tr) + ".png");
                RgbImage tile = read_png_rgb(tile_path);
                if (tile.width != pyr.tile_size_ || tile.height != pyr.tile_size_) {
                    throw DataError("tile has wrong size: " + tile_path.string());
                }
                lvl.tiles.push_back(std::move(tile));
            }
        }
        pyr.levels_.push_back(std::move(lvl));
    }
    return pyr;
}

}  // namespace icpipe::pyramid
