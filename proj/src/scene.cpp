// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/scene.hpp"

#include "external_command.hpp"
#include "mixsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mixsa {

double ForegroundMask::coverage() const {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

MaskRegistry::MaskRegistry() {
    register_adapter("full", full_mask);
    register_adapter("alpha", alpha_mask);
}

void MaskRegistry::register_adapter(const std::string& name, MaskAdapter adapter) {
    if (adapters_.contains(name)) throw Error(ErrorKind::duplicate_key, "mask adapter '" + name + "' already registered");
    adapters_.emplace(name, std::move(adapter));
}

std::vector<std::string> MaskRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : adapters_) out.push_back(name);
    return out;
}

const MaskAdapter& MaskRegistry::get(const std::string& name) const {
    auto it = adapters_.find(name);
    if (it == adapters_.end()) throw Error(ErrorKind::adapter, "foreground adapter '" + name + "' is not available");
    return it->second;
}

ForegroundMask full_mask(const ImageBuffer& img) {
    validate(img);
    return {img.width, img.height, std::vector<double>(img.pixel_count(), 1.0)};
}

ForegroundMask alpha_mask(const ImageBuffer& img) {
    validate(img);
    if (img.channels != 4) return full_mask(img);
    ForegroundMask m{img.width, img.height, std::vector<double>(img.pixel_count())};
    for (std::size_t i = 0; i < img.pixel_count(); ++i) m.values[i] = img.pixels[i * 4 + 3] / 255.0;
    return m;
}

ForegroundMask mask_from_gray(const ImageBuffer& img) {
    ImageBuffer gray = to_gray(img);
    ForegroundMask m{gray.width, gray.height, std::vector<double>(gray.pixel_count())};
    for (std::size_t i = 0; i < gray.pixel_count(); ++i) m.values[i] = gray.pixels[i] / 255.0;
    return m;
}

MaskAdapter make_command_mask_adapter(std::string command_template) {
    return [tmpl = std::move(command_template)](const ImageBuffer& img) {
        ImageBuffer out = detail::run_image_command(tmpl, img, {});
        if (out.width != img.width || out.height != img.height) out = resize_bilinear(out, img.width, img.height);
        return mask_from_gray(out);
    };
}

ForegroundMask extract_foreground_mask(const ImageBuffer& img, const MaskAdapter& adapter) {
    validate(img);
    ForegroundMask m;
    try {
        m = adapter(img);
    } catch (...) {
        rethrow_with_context("foreground adapter", ErrorKind::adapter);
    }
    if (m.width != img.width || m.height != img.height || m.values.size() != img.pixel_count())
        throw Error(ErrorKind::dimension_mismatch, "foreground mask does not match the image size");
    for (double v : m.values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::adapter, "foreground mask value outside [0, 1]");
    return m;
}

ImageBuffer composite_on_white(const ImageBuffer& img, const ForegroundMask& mask, bool hard) {
    validate(img);
    if (mask.width != img.width || mask.height != img.height || mask.values.size() != img.pixel_count())
        throw Error(ErrorKind::dimension_mismatch, "mask and image dimensions differ");
    const int channels = std::min(img.channels, 3);
    ImageBuffer out(img.width, img.height, channels);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        double m = std::clamp(mask.values[i], 0.0, 1.0);
        if (hard) m = m >= 0.5 ? 1.0 : 0.0;
        for (int c = 0; c < channels; ++c) {
            double v = m * img.pixels[i * img.channels + c] + (1.0 - m) * 255.0;
            out.pixels[i * channels + c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

}  // namespace mixsa
