#include "icpipe/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "icpipe/errors.hpp"
#include "icpipe/parallel.hpp"
#include "icpipe/png_io.hpp"

namespace icpipe::segmentation {

std::uint64_t BinaryMask::count_foreground() const {
    std::uint64_t n = 0;
    for (std::uint8_t b : bits) n += b;
    return n;
}

double BinaryMask::foreground_fraction() const {
    if (bits.empty()) return 0.0;
    return static_cast<double>(count_foreground()) / static_cast<double>(bits.size());
}

namespace {

// Between-class variance comparisons are done on exact rationals:
// bcv(t) = (S0*N - S*w0)^2 / (w0 * w1), dropping the common 1/N^2 factor.
// Cross-multiplied comparisons need up to ~2^204 bits for 2^31-pixel
// histograms, so products are carried in 256-bit (four 64-bit limbs).
struct U256 {
    std::uint64_t limb[4] = {0, 0, 0, 0};  // little-endian

    static U256 mul(unsigned __int128 a, unsigned __int128 b) {
        const std::uint64_t a0 = static_cast<std::uint64_t>(a);
        const std::uint64_t a1 = static_cast<std::uint64_t>(a >> 64);
        const std::uint64_t b0 = static_cast<std::uint64_t>(b);
        const std::uint64_t b1 = static_cast<std::uint64_t>(b >> 64);
        U256 r;
        unsigned __int128 t = static_cast<unsigned __int128>(a0) * b0;
        r.limb[0] = static_cast<std::uint64_t>(t);
        unsigned __int128 carry = t >> 64;
        t = static_cast<unsigned __int128>(a0) * b1 + static_cast<unsigned __int128>(a1) * b0 +
            carry;
        r.limb[1] = static_cast<std::uint64_t>(t);
        carry = t >> 64;
        t = static_cast<unsigned __int128>(a1) * b1 + carry;
        r.limb[2] = static_cast<std::uint64_t>(t);
        r.limb[3] = static_cast<std::uint64_t>(t >> 64);
        return r;
    }

    int compare(const U256& o) const {
        for (int i = 3; i >= 0; --i) {
            if (limb[i] != o.limb[i]) return limb[i] < o.limb[i] ? -1 : 1;
        }
        return 0;
    }
};

// bcv numerators/denominators as exact pairs
struct Bcv {
    unsigned __int128 num = 0;  // (S0*N - S*w0)^2
    std::uint64_t den = 1;      // w0*w1 (0 when a class is empty -> bcv := 0)

    bool positive() const { return den != 0 && num != 0; }

    // this > other, exactly
    bool greater_than(const Bcv& o) const {
        if (!positive()) return false;
        if (!o.positive()) return true;
        return U256::mul(num, o.den).compare(U256::mul(o.num, den)) > 0;
    }
};

Bcv bcv_at(std::uint64_t w0, std::uint64_t s0, std::uint64_t n, std::uint64_t s) {
    const std::uint64_t w1 = n - w0;
    if (w0 == 0 || w1 == 0) return {};
    const __int128 d = static_cast<__int128>(s0) * n - static_cast<__int128>(s) * w0;
    const unsigned __int128 mag = d >= 0 ? static_cast<unsigned __int128>(d)
                                         : static_cast<unsigned __int128>(-d);
    Bcv b;
    b.num = mag * mag;
    b.den = w0 * w1;
    return b;
}

}  // namespace

int otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
    int populated = 0;
    std::uint64_t n = 0, s = 0;
    for (int i = 0; i < 256; ++i) {
        if (hist[i] > 0) ++populated;
        n += hist[i];
        s += hist[i] * static_cast<std::uint64_t>(i);
    }
    if (populated < 2) {
        throw DegenerateHistogramError("otsu needs at least two populated bins");
    }

    int best_t = 0;
    Bcv best;
    std::uint64_t w0 = 0, s0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[t];
        s0 += hist[t] * static_cast<std::uint64_t>(t);
        const Bcv cur = bcv_at(w0, s0, n, s);
        if (cur.greater_than(best)) {
            best = cur;
            best_t = t;
        }
    }
    return best_t;
}

std::array<std::uint64_t, 256> histogram(const GrayImage& img) {
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t v : img.data) ++hist[v];
    return hist;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    if (sigma <= 0.0) throw DataError("gaussian_blur requires sigma > 0");
    if (img.empty()) return img;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const int w = img.width, h = img.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    // horizontal pass, clamp-to-edge
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int xx = std::clamp(x + k, 0, w - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(xx, y);
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int yy = std::clamp(y + k, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out.at(x, y) = clamp_u8(round_half_up(acc));
        }
    }
    return out;
}

int map_to_x1(int coord, double from_zoom, int x1_dim) {
    // center of the source pixel in base coordinates, then into the x1 grid
    const Rational f = pyramid::zoom_factor(from_zoom);
    const std::int64_t base_center2 = (2 * static_cast<std::int64_t>(coord) + 1) * f.num;  // x2
    const int idx = static_cast<int>(base_center2 / (2 * 20));
    return std::min(idx, x1_dim - 1);
}

BinaryMask tissue_mask(const pyramid::PyramidImage& pyr) {
    const pyramid::Level& lvl = pyr.level(1.0);
    const RgbImage region = pyr.read_region(1.0, 0, 0, lvl.width, lvl.height);
    const GrayImage gray = to_grayscale(region);
    const int t = otsu_threshold(histogram(gray));
    BinaryMask mask(1.0, lvl.width, lvl.height);
    for (int y = 0; y < lvl.height; ++y) {
        for (int x = 0; x < lvl.width; ++x) {
            mask.set(x, y, gray.at(x, y) <= t);  // darker class is tissue
        }
    }
    return mask;
}

BinaryMask epithelium_mask(const pyramid::PyramidImage& pyr, const BinaryMask& tissue,
                           const SegmentationConfig& cfg, int workers) {
    if (tissue.zoom != 1.0) throw DataError("epithelium_mask expects an x1 tissue mask");
    const pyramid::Level& lvl = pyr.level(2.5);
    BinaryMask mask(2.5, lvl.width, lvl.height);

    const int side = cfg.tissue_patch_side;
    const int cols = (lvl.width + side - 1) / side;
    const int rows = (lvl.height + side - 1) / side;

    // x2.5 -> x1 row/column index maps, shared across patches
    std::vector<int> col_to_x1(static_cast<std::size_t>(lvl.width));
    std::vector<int> row_to_x1(static_cast<std::size_t>(lvl.height));
    for (int x = 0; x < lvl.width; ++x) col_to_x1[x] = map_to_x1(x, 2.5, tissue.width);
    for (int y = 0; y < lvl.height; ++y) row_to_x1[y] = map_to_x1(y, 2.5, tissue.height);

    parallel_for(static_cast<std::size_t>(cols) * rows, workers,
                 [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const int pc = static_cast<int>(idx % cols);
            const int pr = static_cast<int>(idx / cols);
            const int x0 = pc * side;
            const int y0 = pr * side;
            const int x1 = std::min(x0 + side, lvl.width);
            const int y1 = std::min(y0 + side, lvl.height);

            std::uint64_t covered = 0;
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    if (tissue.at(col_to_x1[x], row_to_x1[y])) ++covered;
                }
            }
            const double coverage =
                static_cast<double>(covered) / (static_cast<double>(side) * side);
            if (coverage < cfg.tissue_coverage_min) continue;

            const RgbImage patch = pyr.read_region(2.5, x0, y0, side, side);
            const GrayImage blurred = gaussian_blur(to_grayscale(patch), cfg.smoothing_sigma);

            std::array<std::uint64_t, 256> hist{};
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    ++hist[blurred.at(x - x0, y - y0)];
                }
            }
            int t;
            try {
                t = otsu_threshold(hist);
            } catch (const DegenerateHistogramError&) {
                continue;  // single-valued patch: non-epithelial
            }
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    if (blurred.at(x - x0, y - y0) <= t) mask.set(x, y, true);
                }
            }
        }
    });
    return mask;
}

void write_mask_png(const BinaryMask& mask, const std::filesystem::path& path) {
    write_png_bilevel(path, mask.width, mask.height, mask.bits);
}

}  // namespace icpipe::segmentation
