#include "icpipe/color.hpp"

#include <algorithm>
#include <cmath>

#include "icpipe/image.hpp"

namespace icpipe {

Hsv rgb_to_hsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    const double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double c = mx - mn;
    Hsv out;
    out.v = mx;
    out.s = mx > 0.0 ? c / mx : 0.0;
    if (c > 0.0) {
        double h6;
        if (mx == r) {
            h6 = (g - b) / c;
            if (h6 < 0.0) h6 += 6.0;
        } else if (mx == g) {
            h6 = (b - r) / c + 2.0;
        } else {
            h6 = (r - g) / c + 4.0;
        }
        out.h = h6 / 6.0;
        if (out.h >= 1.0) out.h -= 1.0;
    }
    return out;
}

std::array<std::uint8_t, 3> hsv_to_rgb(const Hsv& hsv) {
    double h = hsv.h - std::floor(hsv.h);
    const double s = std::clamp(hsv.s, 0.0, 1.0);
    const double v = std::clamp(hsv.v, 0.0, 1.0);
    const double h6 = h * 6.0;
    const int sector = std::min(5, static_cast<int>(h6));
    const double f = h6 - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (sector) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
    return {clamp_u8(round_half_up(r * 255.0)), clamp_u8(round_half_up(g * 255.0)),
            clamp_u8(round_half_up(b * 255.0))};
}

}  // namespace icpipe
