// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/image.hpp"

#include "mixsa/common.hpp"

#include <png.h>
// jpeglib.h needs size_t and FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>

namespace mixsa {

ImageBuffer::ImageBuffer(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * std::max(c, 0), fill) {}

void validate(const ImageBuffer& img) {
    if (img.width <= 0 || img.height <= 0)
        throw Error(ErrorKind::invalid_argument, "image dimensions must be positive");
    if (img.channels != 1 && img.channels != 3 && img.channels != 4)
        throw Error(ErrorKind::invalid_argument,
                    "unsupported channel count " + std::to_string(img.channels));
    if (img.pixels.size() != img.pixel_count() * img.channels)
        throw Error(ErrorKind::invalid_argument, "pixel buffer size does not match dimensions");
}

ImageBuffer to_gray(const ImageBuffer& img) {
    validate(img);
    if (img.channels == 1) return img;
    ImageBuffer out(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const auto* p = &img.pixels[i * img.channels];
        double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
    }
    return out;
}

ImageBuffer to_rgb(const ImageBuffer& img) {
    validate(img);
    if (img.channels == 3) return img;
    ImageBuffer out(img.width, img.height, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c)
            out.pixels[i * 3 + c] =
                img.channels == 1 ? img.pixels[i] : img.pixels[i * img.channels + c];
    }
    return out;
}

ImageBuffer invert(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        for (int c = 0; c < std::min(out.channels, 3); ++c) {
            auto& v = out.pixels[i * out.channels + c];
            v = static_cast<std::uint8_t>(255 - v);
        }
    }
    return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
    validate(img);
    if (width <= 0 || height <= 0)
        throw Error(ErrorKind::invalid_argument, "resize target must be positive");
    if (width == img.width && height == img.height) return img;

    ImageBuffer out(width, height, img.channels);
    const double sx = static_cast<double>(img.width) / width;
    const double sy = static_cast<double>(img.height) / height;
    for (int y = 0; y < height; ++y) {
        double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
                double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
                double v = top * (1 - wy) + bot * wy;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
        }
    }
    return out;
}

ImageBuffer center_crop_square(const ImageBuffer& img) {
    validate(img);
    int side = std::min(img.width, img.height);
    if (side == img.width && side == img.height) return img;
    int ox = (img.width - side) / 2;
    int oy = (img.height - side) / 2;
    ImageBuffer out(side, side, img.channels);
    for (int y = 0; y < side; ++y) {
        const auto* src = &img.pixels[(static_cast<std::size_t>(y + oy) * img.width + ox) * img.channels];
        std::memcpy(&out.pixels[static_cast<std::size_t>(y) * side * img.channels], src,
                    static_cast<std::size_t>(side) * img.channels);
    }
    return out;
}

ImageBuffer prepare_square(const ImageBuffer& img, int side) {
    return resize_bilinear(center_crop_square(img), side, side);
}

double white_fraction(const ImageBuffer& img) {
    if (img.empty()) return 0.0;
    std::size_t white = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        bool all = true;
        for (int c = 0; c < std::min(img.channels, 3); ++c)
            all = all && img.pixels[i * img.channels + c] == 255;
        white += all ? 1 : 0;
    }
    return static_cast<double>(white) / img.pixel_count();
}

std::string content_hash(const ImageBuffer& img) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(img.pixels.size() + 12);
    for (int v : {img.width, img.height, img.channels})
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    bytes.insert(bytes.end(), img.pixels.begin(), img.pixels.end());
    return sha256_hex(bytes);
}

//
// PNG via the libpng simplified API.
//

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw Error(ErrorKind::io, std::string("png decode failed: ") + image.message);

    int channels = 3;
    if (image.format & PNG_FORMAT_FLAG_ALPHA) {
        image.format = PNG_FORMAT_RGBA;
        channels = 4;
    } else if (!(image.format & PNG_FORMAT_FLAG_COLOR)) {
        image.format = PNG_FORMAT_GRAY;
        channels = 1;
    } else {
        image.format = PNG_FORMAT_RGB;
    }
    ImageBuffer out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw Error(ErrorKind::io, "png decode failed: " + msg);
    }
    return out;
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Kept free of objects with non-trivial destructors between setjmp and longjmp.
bool decode_jpeg_raw(std::span<const std::uint8_t> bytes, ImageBuffer& out, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::memcpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);
    out.width = static_cast<int>(cinfo.output_width);
    out.height = static_cast<int>(cinfo.output_height);
    out.channels = cinfo.output_components;
    out.pixels.resize(out.pixel_count() * out.channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = &out.pixels[static_cast<std::size_t>(cinfo.output_scanline) * out.width * out.channels];
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

}  // namespace

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
    if (is_png(bytes)) return decode_png(bytes);
    if (is_jpeg(bytes)) {
        ImageBuffer out;
        char message[JMSG_LENGTH_MAX] = {};
        if (!decode_jpeg_raw(bytes, out, message))
            throw Error(ErrorKind::io, std::string("jpeg decode failed: ") + message);
        return out;
    }
    throw Error(ErrorKind::io, "unrecognized image format (expected PNG or JPEG)");
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
    ImageBuffer src = img.channels == 1 || img.channels == 3 || img.channels == 4 ? img : to_rgb(img);
    validate(src);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(src.width);
    image.height = static_cast<png_uint_32>(src.height);
    image.format = src.channels == 1 ? PNG_FORMAT_GRAY
                   : src.channels == 3 ? PNG_FORMAT_RGB
                                       : PNG_FORMAT_RGBA;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, src.pixels.data(), 0, nullptr))
        throw Error(ErrorKind::io, std::string("png encode failed: ") + image.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, src.pixels.data(), 0, nullptr))
        throw Error(ErrorKind::io, std::string("png encode failed: ") + image.message);
    out.resize(size);
    return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

ImageBuffer read_image(const std::filesystem::path& path) {
    try {
        return decode_image(read_file(path));
    } catch (...) {
        rethrow_with_context(path.string(), ErrorKind::io);
    }
}

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
    write_file(path, encode_png(img));
}

}  // namespace mixsa
