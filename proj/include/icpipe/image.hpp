#pragma once

#include <cstdint>
#include <vector>

namespace icpipe {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // row-major, 3 bytes per pixel

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3) {}

    static RgbImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        RgbImage img(w, h);
        for (std::size_t i = 0; i < img.data.size(); i += 3) {
            img.data[i] = r;
            img.data[i + 1] = g;
            img.data[i + 2] = b;
        }
        return img;
    }

    std::uint8_t* px(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* px(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    bool empty() const { return width <= 0 || height <= 0; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;

    GrayImage() = default;
    GrayImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h) {}

    std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    bool empty() const { return width <= 0 || height <= 0; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

struct RgbaImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // 4 bytes per pixel

    RgbaImage() = default;
    RgbaImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 4) {}

    std::uint8_t* px(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 4;
    }
    const std::uint8_t* px(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 4;
    }
};

// Positive rational, used for exact-box downsampling factors.
struct Rational {
    std::int64_t num = 1;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

// Round half-up for non-negative values, as used for all channel averaging.
inline int round_half_up(double v) {
    return static_cast<int>(v + 0.5);
}

inline std::uint8_t clamp_u8(int v) {
    if (v < 0) return 0;
    if (v > 255) return 255;
    return static_cast<std::uint8_t>(v);
}

// ITU-R BT.601 luma, rounded half-up.
std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b);
GrayImage to_grayscale(const RgbImage& img);

// Area-average pooling with exact rational box weights; each output channel
// value is the weighted mean of covered input pixels, rounded half-up.
// factor must be >= 1.
RgbImage downsample(const RgbImage& img, Rational factor);
GrayImage downsample(const GrayImage& img, Rational factor);

// Output dimension of downsampling: ceil(dim * den / num).
inline int downsample_dim(int dim, Rational factor) {
    const std::int64_t n = static_cast<std::int64_t>(dim) * factor.den;
    return static_cast<int>((n + factor.num - 1) / factor.num);
}

}  // namespace icpipe
