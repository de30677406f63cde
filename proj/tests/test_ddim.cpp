#include "mixsa/common.hpp"
#include "mixsa/ddim.hpp"
#include "mixsa/mock_backend.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>

using namespace mixsa;

namespace {

LatentGrid unit_latent(int c, int h, int w) {
    LatentGrid z(c, h, w);
    for (std::size_t i = 0; i < z.size(); ++i) z.values[i] = (i % 2 ? -1.0 : 1.0) * (0.5 + 0.5 * ((i * 7) % 11) / 10.0);
    return z;
}

}  // namespace

TEST_CASE("scaled linear schedule matches a direct product") {
    const NoiseSchedule s = make_schedule(1000, BetaSpec::stable_diffusion());
    REQUIRE(s.alpha_bars.size() == 1001);
    CHECK(s.alpha_bars[0] == 1.0);
    CHECK(s.alpha_bars[1] == doctest::Approx(1.0 - 0.00085).epsilon(1e-14));
    double prod = 1.0;
    const double a = std::sqrt(0.00085), b = std::sqrt(0.012);
    for (int t = 1; t <= 1000; ++t) {
        const double r = a + (b - a) * (t - 1) / 999.0;
        prod *= 1.0 - r * r;
        CHECK(std::abs(s.alpha_bars[t] - prod) < 1e-12);
        CHECK(s.alpha_bars[t] < s.alpha_bars[t - 1]);
    }
    // Known value of the SD v1 schedule.
    CHECK(s.alpha_bars[1000] == doctest::Approx(0.0046682).epsilon(1e-4));
}

TEST_CASE("invalid schedules are rejected") {
    CHECK_THROWS_AS(schedule_from_betas({0.1, 1.0}), Error);
    CHECK_THROWS_AS(schedule_from_betas({}), Error);
    CHECK_THROWS_AS(timestep_subsequence(1000, 0), Error);
    CHECK_THROWS_AS(timestep_subsequence(10, 20), Error);
}

TEST_CASE("timestep subsequence is floor(i T / S)") {
    CHECK(timestep_subsequence(1000, 3) == std::vector<int>{0, 333, 666, 1000});
    const auto ts = timestep_subsequence(1000, 50);
    REQUIRE(ts.size() == 51);
    for (int i = 0; i <= 50; ++i) CHECK(ts[i] == i * 20);
}

TEST_CASE("a single step is inverted by the reverse step") {
    const LatentGrid z = unit_latent(2, 3, 3);
    LatentGrid eps(2, 3, 3, 0.3);
    const LatentGrid there = ddim_step(z, eps, 0.9, 0.4);
    const LatentGrid back = ddim_step(there, eps, 0.4, 0.9);
    CHECK(back.max_abs_diff(z) < 1e-12);
    // Hand-computed: x0 = (1 - sqrt(0.1) 0.3) / sqrt(0.9), z = sqrt(0.4) x0 + sqrt(0.6) 0.3.
    const double x0 = (z.values[0] - std::sqrt(0.1) * 0.3) / std::sqrt(0.9);
    CHECK(there.values[0] == doctest::Approx(std::sqrt(0.4) * x0 + std::sqrt(0.6) * 0.3).epsilon(1e-14));
}

TEST_CASE("zero denoiser round trip is exact") {
    MockBackendConfig cfg = MockBackendConfig::zero();
    MockBackend backend(cfg);
    const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), 50);
    const LatentGrid z0 = unit_latent(1, 16, 16);
    const Trajectory traj = invert(z0, backend, sched);
    CHECK(traj.latents.size() == 51);
    const LatentGrid back = sample(traj.final_latent(), backend, sched);
    CHECK(back.max_abs_diff(z0) < 1e-12);
}

// Scalar oracle for eps = 0.1 z: every inversion and sampling step multiplies
// the latent by a known factor; the product over the round trip was computed
// independently (pure Python, double precision).
TEST_CASE("linear denoiser round trip matches the scalar oracle") {
    MockBackend backend(MockBackendConfig::linear(0.1));
    const int c = backend.capabilities().latent_channels;
    const LatentGrid z0 = unit_latent(c, 16, 16);
    auto roundtrip = [&](int steps) {
        const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), steps);
        return sample(invert(z0, backend, sched).final_latent(), backend, sched);
    };
    const LatentGrid back50 = roundtrip(50);
    for (std::size_t i = 0; i < z0.size(); ++i)
        CHECK(back50.values[i] == doctest::Approx(1.019037688 * z0.values[i]).epsilon(1e-8));
    const LatentGrid back10 = roundtrip(10);
    CHECK(back50.max_abs_diff(z0) <= back10.max_abs_diff(z0));
}

TEST_CASE("schedule hash binds steps and betas") {
    const DdimSchedule a(make_schedule(1000, BetaSpec::stable_diffusion()), 50);
    const DdimSchedule b(make_schedule(1000, BetaSpec::stable_diffusion()), 25);
    const DdimSchedule c(make_schedule(1000, BetaSpec::linear(0.0001, 0.02)), 50);
    CHECK(a.hash() == DdimSchedule(make_schedule(1000, BetaSpec::stable_diffusion()), 50).hash());
    CHECK(a.hash() != b.hash());
    CHECK(a.hash() != c.hash());
}

TEST_CASE("trajectory cache round trip and binding") {
    MockBackend backend(MockBackendConfig::linear(0.1));
    const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), 5);
    const Trajectory traj = invert(unit_latent(1, 4, 4), backend, sched);
    const auto path = std::filesystem::temp_directory_path() / "mixsa_traj_test.bin";
    save_trajectory(traj, sched.hash(), path);
    const Trajectory back = load_trajectory(path, sched.hash());
    REQUIRE(back.latents.size() == traj.latents.size());
    CHECK(back.timesteps == traj.timesteps);
    for (std::size_t i = 0; i < traj.latents.size(); ++i) CHECK(back.latents[i].max_abs_diff(traj.latents[i]) < 1e-6);
    try {
        load_trajectory(path, sched.hash() ^ 1);
        FAIL("expected hash mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::hash_mismatch);
    }
    std::filesystem::remove(path);
}

TEST_CASE("two-step constant schedule") {
    const NoiseSchedule s = schedule_from_betas({0.1, 0.1});
    REQUIRE(s.alpha_bars.size() == 3);
    CHECK(s.alpha_bars[0] == 1.0);
    CHECK(s.alpha_bars[1] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bars[2] == doctest::Approx(0.81).epsilon(1e-15));
    CHECK_THROWS_AS(schedule_from_betas({0.1, 0.0}), Error);
}

TEST_CASE("zero denoiser scales by sqrt(alpha_bar) along the inversion") {
    MockBackend backend(MockBackendConfig::zero());
    const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), 10);
    const LatentGrid z0 = unit_latent(1, 4, 4);
    const Trajectory traj = invert(z0, backend, sched);
    for (std::size_t i = 0; i < traj.latents.size(); ++i) {
        const double g = std::sqrt(sched.alpha_bar(traj.timesteps[i]));
        for (std::size_t j = 0; j < z0.size(); ++j)
            CHECK(traj.latents[i].values[j] == doctest::Approx(g * z0.values[j]).epsilon(1e-12));
    }
}

// eps = c z makes every step a scalar map z -> m z. Inversion s -> t with eps
// taken at z_s: z_t = sqrt(a_t) (z_s - sqrt(1 - a_s) c z_s) / sqrt(a_s) + sqrt(1 - a_t) c z_s.
TEST_CASE("linear denoiser trajectory follows the scalar recurrence") {
    const double c = 0.1;
    MockBackend backend(MockBackendConfig::linear(c));
    const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), 20);
    LatentGrid z0(1, 4, 4);
    for (std::size_t i = 0; i < z0.size(); ++i) z0.values[i] = 0.1 * static_cast<double>(i) - 0.7;
    const Trajectory traj = invert(z0, backend, sched);
    double m = 1.0;
    for (std::size_t i = 1; i < traj.latents.size(); ++i) {
        const double as = sched.alpha_bar(traj.timesteps[i - 1]), at = sched.alpha_bar(traj.timesteps[i]);
        m *= std::sqrt(at) * (1.0 - std::sqrt(1.0 - as) * c) / std::sqrt(as) + std::sqrt(1.0 - at) * c;
        for (std::size_t j = 0; j < z0.size(); ++j)
            CHECK(traj.latents[i].values[j] == doctest::Approx(m * z0.values[j]).epsilon(1e-12));
    }
}

namespace {

struct CountingController : AttentionController {
    std::map<int, int> per_site;
    std::optional<HeadMatrices> on_attention(const AttentionCall& call, AttentionTensors&) override {
        ++per_site[call.site.index];
        return std::nullopt;
    }
};

}  // namespace

TEST_CASE("inversion visits every site once per step") {
    MockBackendConfig cfg = MockBackendConfig::zero();
    cfg.num_sites = 2;
    MockBackend backend(cfg);
    const DdimSchedule sched(make_schedule(1000, BetaSpec::stable_diffusion()), 50);
    CountingController ctrl;
    invert(unit_latent(1, 16, 16), backend, sched, &ctrl);
    REQUIRE(ctrl.per_site.size() == 2);
    for (const auto& [site, n] : ctrl.per_site) CHECK(n == 50);
}
