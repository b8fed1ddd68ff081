#include "icpipe/image.hpp"

#include <algorithm>
#include <stdexcept>

namespace icpipe {

std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    const int v = round_half_up(y);
    return clamp_u8(v);
}

GrayImage to_grayscale(const RgbImage& img) {
    GrayImage out(img.width, img.height);
    const std::uint8_t* src = img.data.data();
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = luma_bt601(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
    }
    return out;
}

namespace {

// Per-axis coverage weights of one output pixel, scaled by factor.den so
// they stay integral. Output pixel o covers input span
// [o*num/den, (o+1)*num/den); the weight of input pixel i is the length of
// the overlap with [i, i+1), times den.
struct AxisCover {
    int first = 0;      // first covered input index
    int count = 0;      // number of covered input pixels
    std::int64_t w[66] = {};
};

void axis_cover(int out_idx, int in_dim, Rational f, AxisCover& c) {
    const std::int64_t lo = static_cast<std::int64_t>(out_idx) * f.num;        // / den
    const std::int64_t hi = (static_cast<std::int64_t>(out_idx) + 1) * f.num;  // / den
    std::int64_t i = lo / f.den;
    c.first = static_cast<int>(i);
    c.count = 0;
    for (; i * f.den < hi && i < in_dim; ++i) {
        if (c.count >= 66) throw std::invalid_argument("downsample factor too large");
        const std::int64_t a = std::max(lo, i * f.den);
        const std::int64_t b = std::min(hi, (i + 1) * f.den);
        c.w[c.count++] = b - a;
    }
}

template <typename Img, int Ch>
Img downsample_impl(const Img& img, Rational f) {
    if (f.num <= 0 || f.den <= 0 || f.num < f.den) {
        throw std::invalid_argument("downsample factor must be a rational >= 1");
    }
    if (f.num == f.den) return img;
    const int ow = downsample_dim(img.width, f);
    const int oh = downsample_dim(img.height, f);
    Img out(ow, oh);

    std::vector<AxisCover> xcov(static_cast<std::size_t>(ow));
    for (int ox = 0; ox < ow; ++ox) axis_cover(ox, img.width, f, xcov[ox]);

    AxisCover ycov;
    for (int oy = 0; oy < oh; ++oy) {
        axis_cover(oy, img.height, f, ycov);
        for (int ox = 0; ox < ow; ++ox) {
            const AxisCover& xc = xcov[ox];
            std::int64_t acc[Ch] = {};
            std::int64_t wsum = 0;
            for (int dy = 0; dy < ycov.count; ++dy) {
                const int y = ycov.first + dy;
                const std::uint8_t* row =
                    img.data.data() + (static_cast<std::size_t>(y) * img.width + xc.first) * Ch;
                for (int dx = 0; dx < xc.count; ++dx) {
                    const std::int64_t w = ycov.w[dy] * xc.w[dx];
                    wsum += w;
                    for (int ch = 0; ch < Ch; ++ch) acc[ch] += w * row[dx * Ch + ch];
                }
            }
            std::uint8_t* dst = out.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * Ch;
            for (int ch = 0; ch < Ch; ++ch) {
                // round half-up of acc/wsum in integer arithmetic
                dst[ch] = static_cast<std::uint8_t>((2 * acc[ch] + wsum) / (2 * wsum));
            }
        }
    }
    return out;
}

}  // namespace

RgbImage downsample(const RgbImage& img, Rational factor) {
    return downsample_impl<RgbImage, 3>(img, factor);
}

GrayImage downsample(const GrayImage& img, Rational factor) {
    return downsample_impl<GrayImage, 1>(img, factor);
}

}  // namespace icpipe
