// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mixsa {

// 8-bit interleaved image with 1 (gray), 3 (RGB) or 4 (RGBA) channels.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;

    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);

    bool empty() const noexcept { return width <= 0 || height <= 0; }
    bool is_gray() const noexcept { return channels == 1; }
    std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }

    std::uint8_t& at(int x, int y, int c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// Throws invalid_argument unless dimensions are positive, the channel count is
// supported and the pixel vector has the right size.
void validate(const ImageBuffer& img);

// BT.601 luma; alpha is dropped.
ImageBuffer to_gray(const ImageBuffer& img);
ImageBuffer to_rgb(const ImageBuffer& img);
ImageBuffer invert(const ImageBuffer& img);

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);
ImageBuffer center_crop_square(const ImageBuffer& img);
// Center crop to a square and rescale to side x side.
ImageBuffer prepare_square(const ImageBuffer& img, int side);

// Fraction of pixels whose every channel equals 255.
double white_fraction(const ImageBuffer& img);

std::string content_hash(const ImageBuffer& img);

//
// Codecs (PNG and JPEG read, PNG write)
//

ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

ImageBuffer read_image(const std::filesystem::path& path);
void write_png(const ImageBuffer& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace mixsa
