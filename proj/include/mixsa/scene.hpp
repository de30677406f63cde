// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/image.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mixsa {

// Per-pixel foreground weight in [0, 1].
struct ForegroundMask {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double coverage() const;
};

using MaskAdapter = std::function<ForegroundMask(const ImageBuffer&)>;

class MaskRegistry {
public:
    // Comes with "full" (all foreground) and "alpha" (the image's alpha
    // channel; opaque when there is none).
    MaskRegistry();

    void register_adapter(const std::string& name, MaskAdapter adapter);
    bool has(const std::string& name) const { return adapters_.contains(name); }
    std::vector<std::string> names() const;
    const MaskAdapter& get(const std::string& name) const;

private:
    std::map<std::string, MaskAdapter> adapters_;
};

ForegroundMask full_mask(const ImageBuffer& img);
ForegroundMask alpha_mask(const ImageBuffer& img);
ForegroundMask mask_from_gray(const ImageBuffer& gray);

// Saliency program contract: {input} color PNG in, {output} grayscale PNG out
// (white = foreground).
MaskAdapter make_command_mask_adapter(std::string command_template);

// Runs the adapter and checks the result (dimensions, range).
ForegroundMask extract_foreground_mask(const ImageBuffer& img, const MaskAdapter& adapter);

// out = mask * img + (1 - mask) * 255 per channel, rounded. With `hard`, the
// mask is thresholded at 0.5 first. Alpha, if any, is dropped.
ImageBuffer composite_on_white(const ImageBuffer& img, const ForegroundMask& mask, bool hard = false);

}  // namespace mixsa
