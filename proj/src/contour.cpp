// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/contour.hpp"

#include "external_command.hpp"
#include "mixsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace mixsa {

void validate(const ContourParams& p) {
    if (!(p.alpha > 0.0 && p.alpha < 1.0))
        throw Error(ErrorKind::invalid_argument, "alpha must lie in (0, 1), got " + std::to_string(p.alpha));
}

DetectorRegistry::DetectorRegistry() {
    register_detector("canny", canny_contours, true);
}

void DetectorRegistry::register_detector(const std::string& name, DetectorFn fn, bool thread_safe) {
    if (name.empty()) throw Error(ErrorKind::invalid_argument, "detector name must not be empty");
    if (detectors_.contains(name)) throw Error(ErrorKind::duplicate_key, "detector '" + name + "' already registered");
    detectors_.emplace(name, Detector{std::move(fn), thread_safe});
}

std::vector<std::string> DetectorRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : detectors_) out.push_back(name);
    return out;
}

const Detector& DetectorRegistry::get(const std::string& name) const {
    auto it = detectors_.find(name);
    if (it == detectors_.end()) {
        std::string available;
        for (const auto& n : names()) available += (available.empty() ? "" : ", ") + n;
        throw Error(ErrorKind::invalid_argument,
                    "contour method '" + name + "' is not registered (available: " + available + ")");
    }
    return it->second;
}

namespace {

using Plane = std::vector<double>;

Plane gaussian_blur(const Plane& src, int w, int h, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-(i * i) / (2 * sigma * sigma));
    for (auto& k : kernel) k /= sum;

    Plane tmp(src.size()), out(src.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
            out[y * w + x] = acc;
        }
    return out;
}

struct Gradients {
    Plane gx, gy, mag;
};

Gradients sobel(const Plane& p, int w, int h) {
    Gradients g{Plane(p.size()), Plane(p.size()), Plane(p.size())};
    auto at = [&](int x, int y) { return p[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
            double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
            g.gx[y * w + x] = gx;
            g.gy[y * w + x] = gy;
            g.mag[y * w + x] = std::hypot(gx, gy);
        }
    return g;
}

Gradients blurred_gradients(const ImageBuffer& gray) {
    Plane p(gray.pixels.begin(), gray.pixels.end());
    return sobel(gaussian_blur(p, gray.width, gray.height, 1.4), gray.width, gray.height);
}

}  // namespace

std::vector<double> canny_gradient_magnitude(const ImageBuffer& img) {
    return blurred_gradients(to_gray(img)).mag;
}

ImageBuffer canny_contours(const ImageBuffer& img, double alpha) {
    ImageBuffer gray = to_gray(img);
    const int w = gray.width, h = gray.height;
    const double high = alpha * 255.0;
    const double low = alpha * 0.4 * 255.0;
    Gradients g = blurred_gradients(gray);

    auto mag = [&](int x, int y) {
        return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : g.mag[y * w + x];
    };

    // Non-maximum suppression along the quantized gradient direction. A tie
    // keeps the pixel on the leading side, so a symmetric ridge stays one
    // pixel wide.
    std::vector<double> thin(static_cast<std::size_t>(w) * h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m = g.mag[y * w + x];
            if (m <= 0.0) continue;
            double angle = std::atan2(g.gy[y * w + x], g.gx[y * w + x]) * 180.0 / std::numbers::pi;
            if (angle < 0) angle += 180.0;
            int dx = 1, dy = 0;
            if (angle >= 22.5 && angle < 67.5) { dx = 1; dy = 1; }
            else if (angle >= 67.5 && angle < 112.5) { dx = 0; dy = 1; }
            else if (angle >= 112.5 && angle < 157.5) { dx = -1; dy = 1; }
            double before = mag(x - dx, y - dy), after = mag(x + dx, y + dy);
            if (m > before && m >= after) thin[y * w + x] = m;
        }

    // Hysteresis: grow from strong pixels through 8-connected weak ones.
    std::vector<std::uint8_t> keep(thin.size(), 0);
    std::vector<int> stack;
    for (int i = 0; i < w * h; ++i)
        if (thin[i] >= high) {
            keep[i] = 1;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        int x = i % w, y = i / w;
        for (int oy = -1; oy <= 1; ++oy)
            for (int ox = -1; ox <= 1; ++ox) {
                int nx = x + ox, ny = y + oy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                int j = ny * w + nx;
                if (!keep[j] && thin[j] >= low) {
                    keep[j] = 1;
                    stack.push_back(j);
                }
            }
    }

    ImageBuffer out(w, h, 1, 255);
    for (int i = 0; i < w * h; ++i) {
        if (!keep[i]) continue;
        double darkness = std::min(1.0, thin[i] / high);
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - darkness)));
    }
    return out;
}

DetectorFn make_command_detector(std::string command_template) {
    return [tmpl = std::move(command_template)](const ImageBuffer& img, double alpha) {
        return detail::run_image_command(tmpl, img, {{"{alpha}", std::to_string(alpha)}});
    };
}

ImageBuffer extract_contours(const ImageBuffer& img, const ContourParams& params, const DetectorRegistry& registry) {
    validate(img);
    validate(params);
    const Detector& detector = registry.get(params.method);
    ImageBuffer out;
    try {
        if (detector.thread_safe) {
            out = detector.fn(img, params.alpha);
        } else {
            static std::mutex serial;
            std::lock_guard lock(serial);
            out = detector.fn(img, params.alpha);
        }
    } catch (...) {
        rethrow_with_context("contour detector '" + params.method + "'", ErrorKind::adapter);
    }
    out = to_gray(out);
    if (out.width != img.width || out.height != img.height) out = resize_bilinear(out, img.width, img.height);
    if (params.invert_polarity) out = invert(out);
    return out;
}

std::size_t stroke_pixel_count(const ImageBuffer& contour) {
    return static_cast<std::size_t>(
        std::count_if(contour.pixels.begin(), contour.pixels.end(), [](std::uint8_t v) { return v != 255; }));
}

}  // namespace mixsa
