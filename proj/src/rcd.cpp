// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/rcd.hpp"

#include "mixsa/backend.hpp"
#include "mixsa/common.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <numeric>

namespace mixsa {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// FFTW's planner is not re-entrant; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Forward (sign = -1) or inverse (+1, unnormalized) 2-D DFT of a side x side plane.
std::vector<std::complex<double>> dft2(const std::vector<std::complex<double>>& in, int side, int sign) {
    const std::size_t n = static_cast<std::size_t>(side) * side;
    auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (!buf) throw std::bad_alloc();
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_2d(side, side, buf, buf, sign, FFTW_ESTIMATE);
    }
    for (std::size_t i = 0; i < n; ++i) {
        buf[i][0] = in[i].real();
        buf[i][1] = in[i].imag();
    }
    fftw_execute(plan);
    std::vector<std::complex<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {buf[i][0], buf[i][1]};
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(buf);
    return out;
}

std::vector<std::complex<double>> dft2(const std::vector<double>& in, int side) {
    return dft2(std::vector<std::complex<double>>(in.begin(), in.end()), side, FFTW_FORWARD);
}

std::vector<double> idft2_real(const std::vector<std::complex<double>>& spec, int side) {
    auto out = dft2(spec, side, FFTW_BACKWARD);
    const double norm = static_cast<double>(side) * side;
    std::vector<double> re(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) re[i] = out[i].real() / norm;
    return re;
}

int signed_freq(int k, int side) { return k <= side / 2 ? k : k - side; }

bool in_low_band(int ky, int kx, int side) {
    const double cutoff = side / 4.0;
    return std::max(std::abs(signed_freq(ky, side)), std::abs(signed_freq(kx, side))) < cutoff;
}

void check_square_plane(const std::vector<double>& plane, int side) {
    if (side <= 0 || plane.size() != static_cast<std::size_t>(side) * side)
        throw Error(ErrorKind::dimension_mismatch, "signal plane is not side x side");
}

}  // namespace

void validate(const RcdParams& p) {
    if (p.binarize_threshold < 1 || p.binarize_threshold > 254)
        throw Error(ErrorKind::invalid_argument,
                    "binarize threshold must be in [1, 254], got " + std::to_string(p.binarize_threshold));
    if (p.bilateral.enabled && !(p.bilateral.spatial_sigma > 0.0 && p.bilateral.range_sigma > 0.0))
        throw Error(ErrorKind::invalid_argument, "bilateral sigmas must be positive");
    const auto& c = p.contrast;
    if (c.enabled) {
        if (!(c.strength >= 0.0 && c.strength <= 1.0))
            throw Error(ErrorKind::invalid_argument, "contrast strength must be in [0, 1]");
        if (!(c.low_percentile >= 0.0 && c.low_percentile < c.high_percentile && c.high_percentile <= 100.0))
            throw Error(ErrorKind::invalid_argument, "contrast percentiles must satisfy 0 <= low < high <= 100");
    }
}

ImageBuffer binarize_extremes(const ImageBuffer& img, const RcdParams& params) {
    validate(img);
    validate(params);
    if (img.channels != 1) throw Error(ErrorKind::invalid_argument, "binarization expects a grayscale image");
    ImageBuffer out = img;
    for (auto& px : out.pixels)
        if (px > params.binarize_threshold) px = params.white_value;
    return out;
}

ImageBuffer bilateral_smooth(const ImageBuffer& img, const BilateralParams& params) {
    validate(img);
    if (!params.enabled) return img;
    if (!(params.spatial_sigma > 0.0 && params.range_sigma > 0.0))
        throw Error(ErrorKind::invalid_argument, "bilateral sigmas must be positive");

    const int radius = static_cast<int>(std::ceil(2.0 * params.spatial_sigma));
    const int win = 2 * radius + 1;
    std::vector<double> spatial(static_cast<std::size_t>(win) * win);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            spatial[(dy + radius) * win + dx + radius] =
                std::exp(-(dx * dx + dy * dy) / (2.0 * params.spatial_sigma * params.spatial_sigma));
    std::array<double, 256> range{};
    for (int d = 0; d < 256; ++d) range[d] = std::exp(-(d * d) / (2.0 * params.range_sigma * params.range_sigma));

    ImageBuffer out = img;
    const int ch = img.channels;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < ch; ++c) {
                if (c == 3) continue;  // alpha passes through
                const int center = img.at(x, y, c);
                double acc = 0.0, wsum = 0.0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= img.height) continue;
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= img.width) continue;
                        const int v = img.at(xx, yy, c);
                        const double w = spatial[(dy + radius) * win + dx + radius] * range[std::abs(v - center)];
                        acc += w * v;
                        wsum += w;
                    }
                }
                out.pixels[(static_cast<std::size_t>(y) * img.width + x) * ch + c] = to_byte(acc / wsum);
            }
        }
    }
    return out;
}

ImageBuffer contrast_stretch(const ImageBuffer& img, const ContrastParams& params) {
    validate(img);
    if (!params.enabled || params.strength == 0.0) return img;
    std::vector<std::uint8_t> sorted = img.pixels;
    std::sort(sorted.begin(), sorted.end());
    auto percentile = [&](double p) {
        const auto idx = static_cast<std::size_t>(std::lround(p / 100.0 * static_cast<double>(sorted.size() - 1)));
        return static_cast<double>(sorted[idx]);
    };
    const double lo = percentile(params.low_percentile);
    const double hi = percentile(params.high_percentile);
    if (hi <= lo) return img;  // flat image, nothing to stretch

    ImageBuffer out = img;
    for (auto& px : out.pixels) {
        const double stretched = std::clamp((px - lo) * 255.0 / (hi - lo), 0.0, 255.0);
        px = to_byte((1.0 - params.strength) * px + params.strength * stretched);
    }
    return out;
}

ImageBuffer apply_rcd(const ImageBuffer& img, const RcdParams& params) {
    validate(params);
    ImageBuffer gray = to_gray(img);
    if (!params.enabled) return gray;
    gray = bilateral_smooth(gray, params.bilateral);
    gray = contrast_stretch(gray, params.contrast);
    return binarize_extremes(gray, params);
}

ImageBuffer checkerboard(int side, int cell) {
    if (side <= 0 || cell <= 0) throw Error(ErrorKind::invalid_argument, "checkerboard side and cell must be positive");
    ImageBuffer img(side, side, 1);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) img.at(x, y, 0) = ((x / cell + y / cell) % 2) ? 255 : 0;
    return img;
}

std::vector<double> to_signal_plane(const ImageBuffer& img) {
    ImageBuffer gray = to_gray(img);
    std::vector<double> plane(gray.pixel_count());
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = pixel_to_signal(gray.pixels[i]);
    return plane;
}

GaussianSource::GaussianSource(std::uint64_t seed) : engine_(seed) {}

// 53 random bits in (0, 1]; the open lower end keeps log() finite.
double GaussianSource::uniform() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianSource::next() {
    if (spare_) {
        double v = *spare_;
        spare_.reset();
        return v;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double theta = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
}

std::vector<double> mean_drift_diagnostic(const ImageBuffer& start, int steps, std::optional<std::uint64_t> noise_seed) {
    if (steps < 0) throw Error(ErrorKind::invalid_argument, "steps must be non-negative");
    std::vector<double> x = to_signal_plane(start);
    std::optional<GaussianSource> noise;
    if (noise_seed) noise.emplace(*noise_seed);

    auto mean = [&] { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); };
    std::vector<double> means{mean()};
    means.reserve(static_cast<std::size_t>(steps) + 1);
    for (int s = 0; s < steps; ++s) {
        for (auto& v : x) v = 0.5 * v + (noise ? 0.5 * noise->next() : 0.0);
        means.push_back(mean());
    }
    return means;
}

std::vector<double> forward_noise(const std::vector<double>& x0, double alpha_bar, GaussianSource& noise) {
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0))
        throw Error(ErrorKind::invalid_argument, "alpha_bar must be in (0, 1]");
    const double a = std::sqrt(alpha_bar);
    const double b = std::sqrt(1.0 - alpha_bar);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double eps = noise.next();
        out[i] = a * x0[i] + b * eps;
    }
    return out;
}

ToyDenoiser make_wiener_denoiser(const std::vector<double>& prior, int side) {
    check_square_plane(prior, side);
    const auto spec = dft2(prior, side);
    const double n = static_cast<double>(side) * side;
    std::vector<double> power(spec.size());
    // Per-coefficient power in the same units as unit-variance white noise.
    for (std::size_t i = 0; i < spec.size(); ++i) power[i] = std::norm(spec[i]) / n;

    return [power, side](const std::vector<double>& noisy, int s, double alpha_bar) {
        if (s != side) throw Error(ErrorKind::dimension_mismatch, "Wiener prior and input sizes differ");
        check_square_plane(noisy, s);
        auto y = dft2(noisy, s);
        const double ra = std::sqrt(alpha_bar);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double den = alpha_bar * power[i] + (1.0 - alpha_bar);
            y[i] *= den > 0.0 ? ra * power[i] / den : 1.0 / ra;
        }
        return idft2_real(y, s);
    };
}

ToyDenoiser make_lowpass_denoiser() {
    return [](const std::vector<double>& noisy, int side, double alpha_bar) {
        check_square_plane(noisy, side);
        auto y = dft2(noisy, side);
        const double gain = 1.0 / std::sqrt(alpha_bar);
        for (int ky = 0; ky < side; ++ky)
            for (int kx = 0; kx < side; ++kx)
                y[static_cast<std::size_t>(ky) * side + kx] *= in_low_band(ky, kx, side) ? gain : 0.0;
        return idft2_real(y, side);
    };
}

BandErrors band_reconstruction_error(const ImageBuffer& img, const NoiseSchedule& schedule, int timestep,
                                     const ToyDenoiser& denoiser, std::uint64_t seed) {
    validate(img);
    if (img.width != img.height) throw Error(ErrorKind::dimension_mismatch, "band diagnostic expects a square image");
    if (timestep < 0 || timestep > schedule.num_steps)
        throw Error(ErrorKind::invalid_argument, "timestep outside the schedule");
    const int side = img.width;
    const auto clean = to_signal_plane(img);
    const double alpha_bar = schedule.alpha_bars.at(static_cast<std::size_t>(timestep));

    GaussianSource noise(seed);
    const auto noisy = forward_noise(clean, alpha_bar, noise);
    const ToyDenoiser& d = denoiser ? denoiser : make_wiener_denoiser(clean, side);
    const auto estimate = d(noisy, side, alpha_bar);
    check_square_plane(estimate, side);

    std::vector<double> err(clean.size());
    for (std::size_t i = 0; i < err.size(); ++i) err[i] = estimate[i] - clean[i];
    const auto spec = dft2(err, side);

    // Parseval: mean(e^2) = sum |E_k|^2 / N^4 for an N x N plane.
    const double norm = std::pow(static_cast<double>(side), 4);
    BandErrors out;
    out.timestep = timestep;
    for (int ky = 0; ky < side; ++ky)
        for (int kx = 0; kx < side; ++kx) {
            const double e = std::norm(spec[static_cast<std::size_t>(ky) * side + kx]) / norm;
            (in_low_band(ky, kx, side) ? out.low_band_error : out.high_band_error) += e;
        }
    return out;
}

}  // namespace mixsa
