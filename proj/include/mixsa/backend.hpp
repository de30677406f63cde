// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/image.hpp"

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mixsa {

// Latent tensor (batch of one), channel-major: values[(c * height + y) * width + x].
struct LatentGrid {
    int channels = 0;
    int height = 0;
    int width = 0;
    int timestep_tag = 0;
    std::vector<double> values;

    LatentGrid() = default;
    LatentGrid(int channels, int height, int width, double fill = 0.0, int timestep = 0);

    std::size_t size() const noexcept { return values.size(); }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool same_shape(const LatentGrid& other) const noexcept {
        return channels == other.channels && height == other.height && width == other.width;
    }
    bool all_finite() const noexcept;
    double max_abs_diff(const LatentGrid& other) const;

    friend bool operator==(const LatentGrid&, const LatentGrid&) = default;
};

// Pixel value p maps to p / 127.5 - 1, so 127.5 sits at latent zero.
inline double pixel_to_signal(std::uint8_t p) { return p / 127.5 - 1.0; }
std::uint8_t signal_to_pixel(double s);

enum class Stage : std::uint8_t { encoder = 0, middle = 1, decoder = 2 };
std::string_view to_string(Stage stage);

struct AttentionSiteId {
    int index = 0;
    Stage stage = Stage::encoder;

    friend auto operator<=>(const AttentionSiteId&, const AttentionSiteId&) = default;
};

// Per-head projected tensors, each tokens x head_dim.
using HeadMatrices = std::vector<Eigen::MatrixXd>;

struct AttentionTensors {
    HeadMatrices q;
    HeadMatrices k;
    HeadMatrices v;
};

struct AttentionCall {
    AttentionSiteId site;
    int timestep = 0;
};

// Invoked once per self-attention site per forward pass. It may rewrite the
// tensors in place; a returned value replaces the attention output instead.
class AttentionController {
public:
    virtual ~AttentionController() = default;
    virtual std::optional<HeadMatrices> on_attention(const AttentionCall& call,
                                                     AttentionTensors& tensors) = 0;
};

// Softmax(Q K^T / sqrt(d)) V per head, d = head dim.
HeadMatrices softmax_attention(const AttentionTensors& tensors);

struct BackendCapabilities {
    std::string id;
    int downsample_factor = 1;
    int latent_channels = 1;
    int native_steps = 1000;
    bool supports_guidance = false;
    std::vector<AttentionSiteId> sites;
};

class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;

    virtual const BackendCapabilities& capabilities() const = 0;

    // Returns z_0 (timestep_tag 0). Image sides must be divisible by the
    // downsampling factor.
    virtual LatentGrid encode_image(const ImageBuffer& img) = 0;
    virtual ImageBuffer decode_latent(const LatentGrid& z) = 0;

    // eps_theta(z, t). `controller` may be null. Callers serialize access.
    virtual LatentGrid predict_noise(const LatentGrid& z, int timestep,
                                     AttentionController* controller,
                                     double guidance_scale) = 0;

    std::vector<AttentionSiteId> list_self_attention_sites() const { return capabilities().sites; }
};

// Shared helpers for backend implementations.
void check_divisible(const ImageBuffer& img, int factor);
void check_finite(const LatentGrid& z);

// Runs `controller` for one site and resolves the attention output, wrapping
// controller failures as generation errors naming the site and timestep.
HeadMatrices run_attention_site(const AttentionCall& call, AttentionTensors& tensors,
                                AttentionController* controller);

// Returns the SD-1.x style default target sites {10, 11}.
std::vector<int> default_target_sites();

}  // namespace mixsa
