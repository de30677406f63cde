// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/image.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mixsa {

struct ContourParams {
    std::string method = "teed";
    // Strokes sparse threshold in (0, 1); higher means sparser strokes.
    double alpha = 0.55;
    // Invert the detector output (for detectors that draw light edges on dark).
    bool invert_polarity = false;
};

void validate(const ContourParams& params);

// Takes the image and alpha, returns a grayscale map with dark strokes on white.
using DetectorFn = std::function<ImageBuffer(const ImageBuffer&, double alpha)>;

struct Detector {
    DetectorFn fn;
    // Calls into detectors that are not thread-safe are serialized.
    bool thread_safe = false;
};

class DetectorRegistry {
public:
    // Comes with the built-in "canny" detector.
    DetectorRegistry();

    void register_detector(const std::string& name, DetectorFn fn, bool thread_safe = false);
    bool has(const std::string& name) const { return detectors_.contains(name); }
    std::vector<std::string> names() const;
    const Detector& get(const std::string& name) const;

private:
    std::map<std::string, Detector> detectors_;
};

// Canny with Gaussian blur (sigma 1.4), Sobel gradients, non-maximum
// suppression and hysteresis on (0.4 * alpha * 255, alpha * 255). Stroke
// darkness follows gradient strength: edges at or above the high threshold
// are black, weaker kept edges are gray, everything else stays white.
ImageBuffer canny_contours(const ImageBuffer& img, double alpha);

// Gradient magnitude after blur (exposed for diagnostics and tests).
std::vector<double> canny_gradient_magnitude(const ImageBuffer& gray);

// Runs an external program. The template's {input}, {output} and {alpha}
// placeholders are substituted; the program reads the PNG at {input} and
// writes a grayscale PNG to {output}.
DetectorFn make_command_detector(std::string command_template);

ImageBuffer extract_contours(const ImageBuffer& img, const ContourParams& params,
                             const DetectorRegistry& registry);

// Number of pixels darker than white.
std::size_t stroke_pixel_count(const ImageBuffer& contour);

}  // namespace mixsa
