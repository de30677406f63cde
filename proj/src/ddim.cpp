// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/ddim.hpp"

#include "binary_io.hpp"
#include "mixsa/common.hpp"
#include "mixsa/image.hpp"

#include <cmath>

namespace mixsa {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw Error(ErrorKind::invalid_argument, "schedule needs at least one step");
    NoiseSchedule s;
    s.num_steps = static_cast<int>(betas.size());
    s.alpha_bars.resize(betas.size() + 1);
    s.alpha_bars[0] = 1.0;
    for (std::size_t t = 0; t < betas.size(); ++t) {
        double b = betas[t];
        if (!(b > 0.0 && b < 1.0))
            throw Error(ErrorKind::invalid_argument,
                        "beta_" + std::to_string(t + 1) + " = " + std::to_string(b) + " outside (0, 1)");
        s.alpha_bars[t + 1] = s.alpha_bars[t] * (1.0 - b);
    }
    s.betas = std::move(betas);
    return s;
}

NoiseSchedule make_schedule(int num_steps, const BetaSpec& spec) {
    if (num_steps < 1) throw Error(ErrorKind::invalid_argument, "schedule needs T >= 1");
    std::vector<double> betas(static_cast<std::size_t>(num_steps));
    for (int i = 0; i < num_steps; ++i) {
        double f = num_steps == 1 ? 0.0 : static_cast<double>(i) / (num_steps - 1);
        switch (spec.kind) {
            case BetaSpec::Kind::constant: betas[i] = spec.start; break;
            case BetaSpec::Kind::linear: betas[i] = spec.start + f * (spec.end - spec.start); break;
            case BetaSpec::Kind::scaled_linear: {
                double r = std::sqrt(spec.start) + f * (std::sqrt(spec.end) - std::sqrt(spec.start));
                betas[i] = r * r;
                break;
            }
        }
    }
    return schedule_from_betas(std::move(betas));
}

std::vector<int> timestep_subsequence(int native_steps, int sampling_steps) {
    if (sampling_steps < 1 || sampling_steps > native_steps)
        throw Error(ErrorKind::invalid_argument, "sampling steps must lie in [1, T]");
    std::vector<int> ts(static_cast<std::size_t>(sampling_steps) + 1);
    for (int i = 0; i <= sampling_steps; ++i)
        ts[i] = static_cast<int>(static_cast<long long>(i) * native_steps / sampling_steps);
    return ts;
}

DdimSchedule::DdimSchedule(NoiseSchedule n, int sampling_steps)
    : noise(std::move(n)), timesteps(timestep_subsequence(noise.num_steps, sampling_steps)) {}

std::uint64_t DdimSchedule::hash() const {
    detail::ByteWriter w;
    w.u32(static_cast<std::uint32_t>(noise.num_steps));
    for (double b : noise.betas) w.u64(std::bit_cast<std::uint64_t>(b));
    w.u32(static_cast<std::uint32_t>(timesteps.size()));
    for (int t : timesteps) w.i32(t);
    return sha256_u64(w.bytes());
}

LatentGrid ddim_step(const LatentGrid& z, const LatentGrid& eps, double alpha_from, double alpha_to) {
    if (!z.same_shape(eps)) throw Error(ErrorKind::dimension_mismatch, "noise prediction shape differs from latent");
    const double sf = std::sqrt(alpha_from), nf = std::sqrt(1.0 - alpha_from);
    const double st = std::sqrt(alpha_to), nt = std::sqrt(1.0 - alpha_to);
    LatentGrid out = z;
    for (std::size_t i = 0; i < z.values.size(); ++i) {
        double x0 = (z.values[i] - nf * eps.values[i]) / sf;
        out.values[i] = st * x0 + nt * eps.values[i];
    }
    return out;
}

Trajectory invert(const LatentGrid& z0, DenoiserBackend& backend, const DdimSchedule& schedule,
                  AttentionController* controller, double guidance_scale) {
    if (z0.timestep_tag != 0) throw Error(ErrorKind::invalid_argument, "inversion must start from a t=0 latent");
    check_finite(z0);
    Trajectory traj;
    traj.timesteps = schedule.timesteps;
    traj.latents.reserve(schedule.timesteps.size());
    traj.latents.push_back(z0);
    for (std::size_t i = 1; i < schedule.timesteps.size(); ++i) {
        const int from = schedule.timesteps[i - 1];
        const int to = schedule.timesteps[i];
        const LatentGrid& cur = traj.latents.back();
        LatentGrid next;
        try {
            LatentGrid eps = backend.predict_noise(cur, to, controller, guidance_scale);
            next = ddim_step(cur, eps, schedule.alpha_bar(from), schedule.alpha_bar(to));
        } catch (...) {
            rethrow_with_context("inversion at t=" + std::to_string(to), ErrorKind::generation);
        }
        next.timestep_tag = to;
        traj.latents.push_back(std::move(next));
    }
    return traj;
}

LatentGrid sample(const LatentGrid& zT, DenoiserBackend& backend, const DdimSchedule& schedule,
                  AttentionController* controller, double guidance_scale) {
    const int T = schedule.timesteps.back();
    if (zT.timestep_tag != T)
        throw Error(ErrorKind::invalid_argument, "sampling must start from a t=" + std::to_string(T) + " latent");
    check_finite(zT);
    LatentGrid z = zT;
    for (std::size_t i = schedule.timesteps.size() - 1; i >= 1; --i) {
        const int from = schedule.timesteps[i];
        const int to = schedule.timesteps[i - 1];
        try {
            LatentGrid eps = backend.predict_noise(z, from, controller, guidance_scale);
            z = ddim_step(z, eps, schedule.alpha_bar(from), schedule.alpha_bar(to));
        } catch (...) {
            rethrow_with_context("sampling at t=" + std::to_string(from), ErrorKind::generation);
        }
        z.timestep_tag = to;
    }
    return z;
}

void save_trajectory(const Trajectory& traj, std::uint64_t schedule_hash, const std::filesystem::path& path) {
    if (traj.latents.empty()) throw Error(ErrorKind::invalid_argument, "empty trajectory");
    const LatentGrid& first = traj.latents.front();
    detail::ByteWriter w;
    w.tag("MSTR");
    w.u8(1);
    w.u64(schedule_hash);
    w.u32(static_cast<std::uint32_t>(first.channels));
    w.u32(static_cast<std::uint32_t>(first.height));
    w.u32(static_cast<std::uint32_t>(first.width));
    w.u32(static_cast<std::uint32_t>(traj.latents.size() - 1));
    for (int t : traj.timesteps) w.i32(t);
    for (const auto& z : traj.latents) {
        if (!z.same_shape(first)) throw Error(ErrorKind::dimension_mismatch, "trajectory shapes differ");
        for (double v : z.values) w.f32(static_cast<float>(v));
    }
    write_file(path, w.bytes());
}

Trajectory load_trajectory(const std::filesystem::path& path, std::uint64_t expected_schedule_hash) {
    auto bytes = read_file(path);
    detail::ByteReader r(bytes);
    if (!r.expect_tag("MSTR")) throw Error(ErrorKind::corrupt_header, "not a trajectory cache: " + path.string());
    if (r.u8() != 1) throw Error(ErrorKind::corrupt_header, "unsupported trajectory cache version");
    std::uint64_t hash = r.u64();
    if (hash != expected_schedule_hash)
        throw Error(ErrorKind::hash_mismatch, "trajectory cache was produced under schedule " + to_hex(hash) +
                                                  ", expected " + to_hex(expected_schedule_hash));
    int c = static_cast<int>(r.u32()), h = static_cast<int>(r.u32()), wd = static_cast<int>(r.u32());
    int steps = static_cast<int>(r.u32());
    Trajectory traj;
    for (int i = 0; i <= steps; ++i) traj.timesteps.push_back(r.i32());
    const std::size_t plane = static_cast<std::size_t>(c) * h * wd;
    r.need(plane * 4 * (static_cast<std::size_t>(steps) + 1));
    for (int i = 0; i <= steps; ++i) {
        LatentGrid z(c, h, wd, 0.0, traj.timesteps[i]);
        for (auto& v : z.values) v = r.f32();
        traj.latents.push_back(std::move(z));
    }
    return traj;
}

}  // namespace mixsa
