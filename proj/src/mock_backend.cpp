// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/mock_backend.hpp"

#include "mixsa/common.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mixsa {

MockBackendConfig MockBackendConfig::zero() {
    MockBackendConfig c;
    c.autoencoder = Autoencoder::identity;
    c.denoiser = Denoiser::zero;
    c.latent_channels = 1;
    return c;
}

MockBackendConfig MockBackendConfig::echo() {
    MockBackendConfig c;
    c.autoencoder = Autoencoder::haar;
    c.denoiser = Denoiser::echo;
    c.latent_channels = 4;
    c.linear_coef = 0.0;
    return c;
}

MockBackendConfig MockBackendConfig::linear(double coef) {
    MockBackendConfig c = zero();
    c.denoiser = Denoiser::linear;
    c.linear_coef = coef;
    return c;
}

MockBackendConfig mock_config_for(const std::string& id) {
    if (id == "mock" || id == "mock-echo") return MockBackendConfig::echo();
    if (id == "mock-zero") return MockBackendConfig::zero();
    if (id == "mock-linear") return MockBackendConfig::linear(0.1);
    throw Error(ErrorKind::invalid_argument, "unknown mock backend '" + id + "'");
}

namespace {

// mt19937_64 is fully specified; the double mapping is spelled out so weights
// do not depend on the standard library's distribution implementations.
class UniformSource {
public:
    explicit UniformSource(std::uint64_t seed) : engine_(seed) {}
    double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53 * 2.0 - 1.0; }
    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols, double scale) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = next() * scale;
        return m;
    }

private:
    std::mt19937_64 engine_;
};

// SD 1.x: 6 down-block, 1 mid-block and 9 up-block transformer layers.
constexpr int kSd16Levels[16] = {0, 0, 1, 1, 2, 2, 3, 2, 2, 2, 1, 1, 1, 0, 0, 0};

// Each token carries the mean and the mean magnitude of every latent channel
// in its cell, so cells with strokes differ from flat cells even when their
// signed detail coefficients cancel.
struct TokenGrid {
    int gh = 1;
    int gw = 1;
    Eigen::MatrixXd tokens;  // (gh*gw) x 2C
};

TokenGrid pool(const LatentGrid& z, int side) {
    TokenGrid g;
    g.gh = std::clamp(side, 1, z.height);
    g.gw = std::clamp(side, 1, z.width);
    g.tokens = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.gh) * g.gw, 2 * z.channels);
    for (int ty = 0; ty < g.gh; ++ty) {
        int y0 = ty * z.height / g.gh, y1 = (ty + 1) * z.height / g.gh;
        for (int tx = 0; tx < g.gw; ++tx) {
            int x0 = tx * z.width / g.gw, x1 = (tx + 1) * z.width / g.gw;
            double inv = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int c = 0; c < z.channels; ++c) {
                double s = 0.0, a = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) {
                        s += z.at(c, y, x);
                        a += std::abs(z.at(c, y, x));
                    }
                g.tokens(ty * g.gw + tx, c) = s * inv;
                g.tokens(ty * g.gw + tx, z.channels + c) = a * inv;
            }
        }
    }
    return g;
}

// Zero mean, unit variance per feature across tokens, standing in for the
// group normalization in front of real attention blocks. Keeps attention
// sensitive at high timesteps, where inverted latents shrink toward zero.
void normalize_tokens(Eigen::MatrixXd& tokens) {
    if (tokens.rows() < 2) return;
    for (Eigen::Index c = 0; c < tokens.cols(); ++c) {
        auto col = tokens.col(c);
        const double mean = col.mean();
        col.array() -= mean;
        const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(tokens.rows()));
        col /= sd + 1e-6;
    }
}

}  // namespace

MockBackend::MockBackend(MockBackendConfig config) : config_(config) {
    if (config_.num_sites < 0 || config_.heads <= 0 || config_.head_dim <= 0 || config_.site_grid <= 0)
        throw Error(ErrorKind::invalid_argument, "mock backend sizes must be positive");
    if (config_.autoencoder == MockBackendConfig::Autoencoder::haar) {
        config_.latent_channels = 4;
    } else if (config_.latent_channels != 1 && config_.latent_channels != 3) {
        throw Error(ErrorKind::invalid_argument, "identity autoencoder supports 1 or 3 latent channels");
    }

    caps_.downsample_factor = config_.autoencoder == MockBackendConfig::Autoencoder::haar ? 2 : 1;
    caps_.latent_channels = config_.latent_channels;
    caps_.native_steps = config_.native_steps;
    caps_.supports_guidance = false;
    switch (config_.denoiser) {
        case MockBackendConfig::Denoiser::zero: caps_.id = "mock-zero"; break;
        case MockBackendConfig::Denoiser::linear: caps_.id = "mock-linear"; break;
        case MockBackendConfig::Denoiser::echo: caps_.id = "mock-echo"; break;
    }

    const int n = config_.num_sites;
    const int encoder_count = n * 6 / 16;
    const bool has_middle = n >= 3;
    for (int i = 0; i < n; ++i) {
        Stage stage = Stage::decoder;
        if (i < encoder_count) stage = Stage::encoder;
        else if (has_middle && i == encoder_count) stage = Stage::middle;
        caps_.sites.push_back({i, stage});
        levels_.push_back(n == 16 ? kSd16Levels[i] : 0);
    }

    const int model_dim = config_.heads * config_.head_dim;
    const int c = config_.latent_channels;
    for (int i = 0; i < n; ++i) {
        UniformSource rng(config_.projection_seed * 1000003ULL + static_cast<std::uint64_t>(i));
        SiteWeights w;
        w.in = rng.matrix(2 * c, model_dim, 2.0);
        w.wq = rng.matrix(model_dim, model_dim, 1.0 / std::sqrt(model_dim));
        w.wk = rng.matrix(model_dim, model_dim, 1.0 / std::sqrt(model_dim));
        w.wv = rng.matrix(model_dim, model_dim, 1.0 / std::sqrt(model_dim));
        w.out = rng.matrix(model_dim, c, 1.0 / std::sqrt(model_dim));
        w.time_freq = rng.matrix(1, model_dim, 0.01).array().abs().matrix();
        w.time_phase = rng.matrix(1, model_dim, 3.14159);
        weights_.push_back(std::move(w));
    }
}

LatentGrid MockBackend::encode_image(const ImageBuffer& img) {
    check_divisible(img, caps_.downsample_factor);
    ++encode_count_;
    if (config_.autoencoder == MockBackendConfig::Autoencoder::identity) {
        ImageBuffer src = config_.latent_channels == 1 ? to_gray(img) : to_rgb(img);
        LatentGrid z(config_.latent_channels, src.height, src.width);
        for (int c = 0; c < z.channels; ++c)
            for (int y = 0; y < z.height; ++y)
                for (int x = 0; x < z.width; ++x) z.at(c, y, x) = pixel_to_signal(src.at(x, y, c));
        return z;
    }

    ImageBuffer gray = to_gray(img);
    LatentGrid z(4, gray.height / 2, gray.width / 2);
    for (int y = 0; y < z.height; ++y) {
        for (int x = 0; x < z.width; ++x) {
            double a = pixel_to_signal(gray.at(2 * x, 2 * y));
            double b = pixel_to_signal(gray.at(2 * x + 1, 2 * y));
            double c = pixel_to_signal(gray.at(2 * x, 2 * y + 1));
            double d = pixel_to_signal(gray.at(2 * x + 1, 2 * y + 1));
            z.at(0, y, x) = (a + b + c + d) * 0.5;
            z.at(1, y, x) = (a - b + c - d) * 0.5;
            z.at(2, y, x) = (a + b - c - d) * 0.5;
            z.at(3, y, x) = (a - b - c + d) * 0.5;
        }
    }
    return z;
}

ImageBuffer MockBackend::decode_latent(const LatentGrid& z) {
    check_finite(z);
    if (z.channels != config_.latent_channels)
        throw Error(ErrorKind::dimension_mismatch, "latent channel count does not match backend");
    if (config_.autoencoder == MockBackendConfig::Autoencoder::identity) {
        ImageBuffer out(z.width, z.height, z.channels);
        for (int c = 0; c < z.channels; ++c)
            for (int y = 0; y < z.height; ++y)
                for (int x = 0; x < z.width; ++x) out.at(x, y, c) = signal_to_pixel(z.at(c, y, x));
        return out;
    }

    ImageBuffer out(z.width * 2, z.height * 2, 1);
    for (int y = 0; y < z.height; ++y) {
        for (int x = 0; x < z.width; ++x) {
            double ll = z.at(0, y, x), lh = z.at(1, y, x), hl = z.at(2, y, x), hh = z.at(3, y, x);
            out.at(2 * x, 2 * y) = signal_to_pixel((ll + lh + hl + hh) * 0.5);
            out.at(2 * x + 1, 2 * y) = signal_to_pixel((ll - lh + hl - hh) * 0.5);
            out.at(2 * x, 2 * y + 1) = signal_to_pixel((ll + lh - hl - hh) * 0.5);
            out.at(2 * x + 1, 2 * y + 1) = signal_to_pixel((ll - lh - hl + hh) * 0.5);
        }
    }
    return out;
}

LatentGrid MockBackend::predict_noise(const LatentGrid& z, int timestep, AttentionController* controller,
                                      double guidance_scale) {
    check_finite(z);
    if (z.channels != config_.latent_channels)
        throw Error(ErrorKind::dimension_mismatch, "latent channel count does not match backend");
    if (timestep < 1 || timestep > config_.native_steps)
        throw Error(ErrorKind::invalid_argument, "timestep " + std::to_string(timestep) + " outside [1, " +
                                                     std::to_string(config_.native_steps) + "]");
    if (guidance_scale != 1.0 && !guidance_notice_logged_) {
        log_info("backend " + caps_.id + " has no text pathway; guidance scale ignored");
        guidance_notice_logged_ = true;
    }
    ++forward_count_;

    LatentGrid eps(z.channels, z.height, z.width, 0.0, z.timestep_tag);
    const bool accumulate = config_.denoiser == MockBackendConfig::Denoiser::echo;

    std::vector<TokenGrid> pyramid(4);
    std::vector<bool> pooled(4, false);
    const int dh = config_.head_dim;

    for (std::size_t s = 0; s < caps_.sites.size(); ++s) {
        const int level = levels_[s];
        if (!pooled[level]) {
            pyramid[level] = pool(z, std::max(1, config_.site_grid >> level));
            normalize_tokens(pyramid[level].tokens);
            pooled[level] = true;
        }
        const TokenGrid& grid = pyramid[level];
        const SiteWeights& w = weights_[s];

        Eigen::RowVectorXd temb = (w.time_freq * static_cast<double>(timestep) + w.time_phase).array().sin() * 0.1;
        Eigen::MatrixXd features = (grid.tokens * w.in).rowwise() + temb;
        Eigen::MatrixXd q = features * w.wq;
        Eigen::MatrixXd k = features * w.wk;
        Eigen::MatrixXd v = features * w.wv;

        AttentionTensors tensors;
        for (int h = 0; h < config_.heads; ++h) {
            tensors.q.push_back(q.middleCols(h * dh, dh));
            tensors.k.push_back(k.middleCols(h * dh, dh));
            tensors.v.push_back(v.middleCols(h * dh, dh));
        }

        HeadMatrices heads = run_attention_site({caps_.sites[s], timestep}, tensors, controller);
        if (!accumulate) continue;

        Eigen::MatrixXd merged(grid.tokens.rows(), config_.heads * dh);
        for (int h = 0; h < config_.heads; ++h) merged.middleCols(h * dh, dh) = heads[h];
        Eigen::MatrixXd projected = merged * w.out;  // tokens x C

        for (int c = 0; c < z.channels; ++c) {
            for (int y = 0; y < z.height; ++y) {
                int ty = y * grid.gh / z.height;
                for (int x = 0; x < z.width; ++x) {
                    int tx = x * grid.gw / z.width;
                    eps.at(c, y, x) += config_.echo_gain * projected(ty * grid.gw + tx, c);
                }
            }
        }
    }

    if (config_.denoiser != MockBackendConfig::Denoiser::zero && config_.linear_coef != 0.0) {
        for (std::size_t i = 0; i < eps.values.size(); ++i) eps.values[i] += config_.linear_coef * z.values[i];
    }
    return eps;
}

}  // namespace mixsa
