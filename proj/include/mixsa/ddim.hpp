// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/backend.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mixsa {

// betas[t-1] is beta_t for t = 1..T; alpha_bars[t] = prod_{s<=t} (1 - beta_s),
// alpha_bars[0] = 1.
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alpha_bars;
    int num_steps = 0;
};

struct BetaSpec {
    enum class Kind { constant, linear, scaled_linear };
    Kind kind = Kind::scaled_linear;
    double start = 0.00085;
    double end = 0.012;

    static BetaSpec constant(double beta) { return {Kind::constant, beta, beta}; }
    static BetaSpec linear(double start, double end) { return {Kind::linear, start, end}; }
    // Latent-diffusion default: sqrt-linear from 0.00085 to 0.012.
    static BetaSpec stable_diffusion() { return {}; }
};

NoiseSchedule make_schedule(int num_steps, const BetaSpec& spec);
NoiseSchedule schedule_from_betas(std::vector<double> betas);

inline constexpr int kDefaultSamplingSteps = 50;

// Uniform subsequence 0 = t_0 < t_1 < ... < t_S = T with t_i = floor(i*T/S).
std::vector<int> timestep_subsequence(int native_steps, int sampling_steps);

// A noise schedule plus the DDIM timestep subsequence used for both
// inversion and sampling.
struct DdimSchedule {
    NoiseSchedule noise;
    std::vector<int> timesteps;  // length S+1, timesteps[0] == 0

    DdimSchedule() = default;
    DdimSchedule(NoiseSchedule noise, int sampling_steps);

    int sampling_steps() const noexcept { return static_cast<int>(timesteps.size()) - 1; }
    double alpha_bar(int t) const { return noise.alpha_bars.at(static_cast<std::size_t>(t)); }
    // Binds banks and caches to the exact schedule they were produced under.
    std::uint64_t hash() const;
};

struct Trajectory {
    std::vector<LatentGrid> latents;  // latents[i] at timesteps[i]
    std::vector<int> timesteps;

    const LatentGrid& final_latent() const { return latents.back(); }
};

// Deterministic (eta = 0) DDIM.
//
// Sampling step t -> s (s < t):
//   x0  = (z_t - sqrt(1 - a_t) eps) / sqrt(a_t)
//   z_s = sqrt(a_s) x0 + sqrt(1 - a_s) eps,        eps = eps_theta(z_t, t)
// Inversion solves the same relation for the noisier latent, evaluating eps at
// the cleaner latent: eps = eps_theta(z_s, t).
LatentGrid ddim_step(const LatentGrid& z, const LatentGrid& eps, double alpha_from, double alpha_to);

Trajectory invert(const LatentGrid& z0, DenoiserBackend& backend, const DdimSchedule& schedule,
                  AttentionController* controller = nullptr, double guidance_scale = 7.5);

LatentGrid sample(const LatentGrid& zT, DenoiserBackend& backend, const DdimSchedule& schedule,
                  AttentionController* controller = nullptr, double guidance_scale = 7.5);

//
// Trajectory cache: "MSTR", version, schedule hash, shape, S, the timestep
// list, then one little-endian float32 plane set per timestep.
//

void save_trajectory(const Trajectory& traj, std::uint64_t schedule_hash, const std::filesystem::path& path);
Trajectory load_trajectory(const std::filesystem::path& path, std::uint64_t expected_schedule_hash);

}  // namespace mixsa
