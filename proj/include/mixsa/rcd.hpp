// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/ddim.hpp"
#include "mixsa/image.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace mixsa {

struct BilateralParams {
    bool enabled = true;
    double spatial_sigma = 2.0;
    double range_sigma = 20.0;
};

struct ContrastParams {
    bool enabled = false;
    // Blend between the input (0) and the full 1-99 percentile stretch (1).
    double strength = 1.0;
    double low_percentile = 1.0;
    double high_percentile = 99.0;
};

struct RcdParams {
    bool enabled = true;
    int binarize_threshold = 230;
    std::uint8_t white_value = 255;
    BilateralParams bilateral;
    ContrastParams contrast;
};

void validate(const RcdParams& params);

// Pixels strictly above the threshold become white_value; the rest are kept.
ImageBuffer binarize_extremes(const ImageBuffer& img, const RcdParams& params);
ImageBuffer bilateral_smooth(const ImageBuffer& img, const BilateralParams& params);
ImageBuffer contrast_stretch(const ImageBuffer& img, const ContrastParams& params);

// Gray conversion, bilateral smoothing, optional contrast stretch, then
// binarization, so no output pixel lands strictly between the threshold and
// white. Returns the gray input unchanged when disabled.
ImageBuffer apply_rcd(const ImageBuffer& img, const RcdParams& params);

//
// Diagnostics of the color-averaging behaviour
//

// Iterates x <- x/2 + eps/2 on the [-1, 1] signal of `start` and returns the
// initial mean followed by the mean after each step. eps is zero unless
// `noise_seed` is given, in which case it is standard Gaussian per pixel.
std::vector<double> mean_drift_diagnostic(const ImageBuffer& start, int steps,
                                          std::optional<std::uint64_t> noise_seed = std::nullopt);

// Standard normal draws from a fully specified generator (mt19937_64 +
// Box-Muller), so seeded fixtures reproduce across standard libraries.
class GaussianSource {
public:
    explicit GaussianSource(std::uint64_t seed);
    double next();

private:
    double uniform();

    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

// x_t = sqrt(a) x_0 + sqrt(1 - a) eps
std::vector<double> forward_noise(const std::vector<double>& x0, double alpha_bar, GaussianSource& noise);

// Square signal plane (side x side, row-major) in, estimate of x_0 out.
using ToyDenoiser = std::function<std::vector<double>(const std::vector<double>& noisy, int side, double alpha_bar)>;

// Per-frequency Wiener shrinkage using the power spectrum of `prior`:
// gain = sqrt(a) P / (a P + 1 - a).
ToyDenoiser make_wiener_denoiser(const std::vector<double>& prior, int side);
// Keeps the low band (see band_reconstruction_error) and rescales by 1/sqrt(a).
ToyDenoiser make_lowpass_denoiser();

struct BandErrors {
    double high_band_error = 0.0;
    double low_band_error = 0.0;
    int timestep = 0;
};

// Noises the gray image to timestep t with the schedule, reconstructs with
// `denoiser` and splits the reconstruction error spectrum into the low band
// (max(|kx|, |ky|) < side/4) and the rest. Each value is that band's share of
// the pixel-domain mean-squared error, so the two sum to the total MSE. With
// no denoiser, a Wiener denoiser using the clean image's own spectrum is used.
BandErrors band_reconstruction_error(const ImageBuffer& img, const NoiseSchedule& schedule, int timestep,
                                     const ToyDenoiser& denoiser = {}, std::uint64_t seed = 0);

std::vector<double> to_signal_plane(const ImageBuffer& img);

// Black/white squares of `cell` pixels; the fixture for the band diagnostic.
ImageBuffer checkerboard(int side, int cell);

}  // namespace mixsa
