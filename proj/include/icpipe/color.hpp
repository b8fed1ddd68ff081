#pragma once

#include <array>
#include <cstdint>

namespace icpipe {

// HSV with hue in turns [0,1), saturation and value in [0,1].
struct Hsv {
    double h = 0.0;
    double s = 0.0;
    double v = 0.0;
};

Hsv rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b);
std::array<std::uint8_t, 3> hsv_to_rgb(const Hsv& hsv);

}  // namespace icpipe
