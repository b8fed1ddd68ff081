#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "icpipe/image.hpp"

namespace icpipe::pyramid {

// Zoom factors of the four canonical levels, relative to x20 = full
// resolution. Doubles are exact for all four values.
inline constexpr std::array<double, 4> kZoomLevels = {20.0, 5.0, 2.5, 1.0};

// Downsampling factor from the x20 base to the given level.
Rational zoom_factor(double zoom);

// Pixel dimension of a level: ceil(base_dim * zoom / 20).
int level_dim(int base_dim, double zoom);

// "20", "5", "2.5", "1" — one decimal where fractional.
std::string zoom_label(double zoom);

enum class PatchStatus { Retained, Discarded };

enum class DiscardReason { None, NoNuclei, Blurry, InsufficientTissue };

const char* discard_reason_name(DiscardReason r);

// One analysis unit: a square patch in a level's pixel grid.
struct PatchRef {
    double zoom = 20.0;
    int x = 0;
    int y = 0;
    int side = 256;
    PatchStatus status = PatchStatus::Retained;
    DiscardReason reason = DiscardReason::None;
};

struct Level {
    double zoom = 20.0;
    int width = 0;
    int height = 0;
    int tile_cols = 0;
    int tile_rows = 0;
    std::vector<RgbImage> tiles;  // row-major, each tile_size^2, white-padded
};

// Immutable multi-resolution RGB container. Built once, then safe for
// concurrent region reads.
class PyramidImage {
public:
    PyramidImage() = default;

    static PyramidImage build(const RgbImage& base, int tile_size = 512);

    int base_width() const { return base_width_; }
    int base_height() const { return base_height_; }
    int tile_size() const { return tile_size_; }
    const std::vector<Level>& levels() const { return levels_; }

    bool has_level(double zoom) const;
    const Level& level(double zoom) const;  // throws UnknownZoomError

    // Returns a w x h buffer; pixels outside the level bounds are white.
    RgbImage read_region(double zoom, int x, int y, int w, int h) const;

    // On-disk format: <dir>/manifest.json plus level_<zoom>/tile_<col>_<row>.png.
    void save(const std::filesystem::path& dir) const;
    static PyramidImage load(const std::filesystem::path& dir);

private:
    int base_width_ = 0;
    int base_height_ = 0;
    int tile_size_ = 512;
    std::vector<Level> levels_;
};

}  // namespace icpipe::pyramid
