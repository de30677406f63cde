// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

// Synthetic inputs shared by the unit and acceptance tests.

#pragma once

#include "mixsa/image.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>

namespace mixsa::testing {

// Horizontal red / vertical green ramp with a red disc and a blue rectangle.
inline ImageBuffer color_fixture(int side = 512) {
    ImageBuffer img(side, side, 3);
    const double s = side / 512.0;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            std::uint8_t px[3] = {static_cast<std::uint8_t>(x * 255 / side),
                                  static_cast<std::uint8_t>(y * 255 / side), 128};
            const double dx = x - 256 * s, dy = y - 256 * s;
            if (dx * dx + dy * dy < (150 * s) * (150 * s)) {
                px[0] = 220, px[1] = 60, px[2] = 40;
            }
            if (std::abs(x - 100 * s) < 40 * s && std::abs(y - 400 * s) < 60 * s) {
                px[0] = 30, px[1] = 30, px[2] = 200;
            }
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = px[c];
        }
    }
    return img;
}

// Sketch-like reference with uneven stroke density: dense diagonal hatching
// top-left, sparse verticals bottom-right and a ring top-right.
inline ImageBuffer reference_fixture(int side = 512) {
    ImageBuffer img(side, side, 1, 255);
    const double s = side / 512.0;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double ux = x / s, uy = y / s;
            auto& p = img.at(x, y);
            if (ux < 256 && uy < 256 && (x + y) % 10 < 2) p = 10;
            if (ux > 300 && uy > 300 && x % 40 < 3) p = 40;
            if (std::abs(std::hypot(ux - 380, uy - 140) - 60) < 2) p = 0;
        }
    }
    return img;
}

inline ImageBuffer constant_image(int side, std::uint8_t value, int channels = 3) {
    return ImageBuffer(side, side, channels, value);
}

}  // namespace mixsa::testing
