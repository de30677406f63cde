// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/backend.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mixsa {

// Weight-free backends for desk-scale runs and tests.
//
// Autoencoders:
//   identity - f = 1; latent is the pixel signal in [-1, 1] (C = 1 gray or 3 RGB)
//   haar     - f = 2, C = 4; orthonormal 2x2 Haar analysis of the gray signal,
//              exactly invertible
//
// Denoisers (every variant still runs its attention sites so controllers are
// exercised; only the contribution to eps differs):
//   zero   - eps = 0
//   linear - eps = linear_coef * z
//   echo   - eps = linear_coef * z + echo_gain * sum over sites of the
//            up-sampled attention output
//
// Each site pools the latent onto a token grid of side site_grid >> level
// (per-channel mean and mean magnitude), normalizes the token features,
// projects them with fixed seeded matrices into heads x head_dim Q/K/V and
// computes genuine softmax attention.
struct MockBackendConfig {
    enum class Autoencoder { identity, haar };
    enum class Denoiser { zero, linear, echo };

    Autoencoder autoencoder = Autoencoder::identity;
    Denoiser denoiser = Denoiser::zero;
    int latent_channels = 1;  // identity only: 1 or 3
    double linear_coef = 0.1;
    double echo_gain = 0.005;
    int num_sites = 16;
    int heads = 2;
    int head_dim = 8;
    int site_grid = 16;
    int native_steps = 1000;
    std::uint64_t projection_seed = 0x5eedULL;

    // identity autoencoder + zero denoiser
    static MockBackendConfig zero();
    // haar autoencoder + echo denoiser, the default `--backend mock`
    static MockBackendConfig echo();
    static MockBackendConfig linear(double coef);
};

class MockBackend final : public DenoiserBackend {
public:
    explicit MockBackend(MockBackendConfig config = MockBackendConfig::echo());

    const BackendCapabilities& capabilities() const override { return caps_; }
    LatentGrid encode_image(const ImageBuffer& img) override;
    ImageBuffer decode_latent(const LatentGrid& z) override;
    LatentGrid predict_noise(const LatentGrid& z, int timestep, AttentionController* controller,
                             double guidance_scale) override;

    const MockBackendConfig& config() const noexcept { return config_; }
    std::uint64_t forward_count() const noexcept { return forward_count_; }
    std::uint64_t encode_count() const noexcept { return encode_count_; }

    // Pooling level of each site (0 = finest token grid).
    const std::vector<int>& site_levels() const noexcept { return levels_; }

private:
    struct SiteWeights {
        Eigen::MatrixXd in;   // 2C x model_dim
        Eigen::MatrixXd wq;   // model_dim x model_dim
        Eigen::MatrixXd wk;
        Eigen::MatrixXd wv;
        Eigen::MatrixXd out;  // model_dim x C
        Eigen::RowVectorXd time_freq;
        Eigen::RowVectorXd time_phase;
    };

    MockBackendConfig config_;
    BackendCapabilities caps_;
    std::vector<int> levels_;
    std::vector<SiteWeights> weights_;
    std::uint64_t forward_count_ = 0;
    std::uint64_t encode_count_ = 0;
    bool guidance_notice_logged_ = false;
};

// Builds a mock backend from an identifier: "mock" / "mock-echo", "mock-zero",
// "mock-linear". Throws invalid_argument otherwise.
MockBackendConfig mock_config_for(const std::string& id);

}  // namespace mixsa
