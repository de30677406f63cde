// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/attnbank.hpp"
#include "mixsa/backend.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace mixsa {

struct MixParams {
    // Weight of the blended color/contour query against the reference query.
    double zeta = 0.4;
    // Texture share inside the blended query: beta * Qc + (1 - beta) * Qs.
    double beta = 0.5;
    std::set<int> target_sites = {10, 11};
    // Softmax temperature is 1/sqrt(scale_d); 0 means "use the head dimension".
    int scale_d = 0;
    // With false, the contour query stands in for the color/contour blend.
    bool decompose_texture = true;

    // Copy with zeta and beta clamped into [0, 1]; logs a warning when it clamps.
    MixParams clamped() const;
};

// zeta * (beta * Qc + (1 - beta) * Qs) + (1 - zeta) * Qr
Eigen::MatrixXd blend_queries(const Eigen::MatrixXd& qc, const Eigen::MatrixXd& qs,
                              const Eigen::MatrixXd& qr, const MixParams& params);

// Coefficients applied to (Qc, Qs, Qr); they always sum to one.
struct BlendWeights {
    double color;
    double contour;
    double reference;
};
BlendWeights blend_weights(const MixParams& params);

// Softmax(Qm Kr^T / sqrt(d)) Vr.
Eigen::MatrixXd mixed_attention(const Eigen::MatrixXd& qm, const Eigen::MatrixXd& kr,
                                const Eigen::MatrixXd& vr, const MixParams& params);

// Target-site attention outputs keyed by (timestep, site), recorded when a
// debug dump is attached to the controller.
using AttentionDump = std::map<std::pair<int, int>, HeadMatrices>;

// Attention controller for generation. At target sites it ignores the live
// tensors, blends banked Qc/Qs/Qr at (site, t) and attends over banked Kr/Vr;
// other sites pass through untouched.
class MixController final : public AttentionController {
public:
    MixController(const AttentionBank& bank, MixParams params);

    std::optional<HeadMatrices> on_attention(const AttentionCall& call, AttentionTensors& tensors) override;

    void set_debug_dump(AttentionDump* dump) noexcept { dump_ = dump; }
    const MixParams& params() const noexcept { return params_; }

private:
    const AttentionBank& bank_;
    MixParams params_;
    AttentionDump* dump_ = nullptr;
};

// Verifies schedule binding and completeness before handing out a controller.
MixController make_controller(const AttentionBank& bank, const MixParams& params,
                              std::uint64_t schedule_hash, std::span<const int> timesteps);

}  // namespace mixsa
