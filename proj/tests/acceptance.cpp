// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// line fails. Everything runs on the weight-free mock backends.

#include "fixtures.hpp"

#include "mixsa/attnbank.hpp"
#include "mixsa/common.hpp"
#include "mixsa/contour.hpp"
#include "mixsa/ddim.hpp"
#include "mixsa/metrics.hpp"
#include "mixsa/mixer.hpp"
#include "mixsa/mock_backend.hpp"
#include "mixsa/pipeline.hpp"
#include "mixsa/rcd.hpp"

#include <Eigen/Cholesky>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace mixsa;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(const char* name, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail << " [exception: " << e.what() << "]";
    }
    std::printf("%s  %-22s %s (%.2f s)\n", c.ok ? "PASS" : "FAIL", name, c.detail.str().c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!c.ok) ++failures;
}

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

//
// Query blend
//

void blend_endpoints(Check& c) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0, worst_sum = 0.0;
    const auto t0 = Clock::now();
    for (int i = 0; i < 1000; ++i) {
        const Eigen::MatrixXd qc = random_matrix(rng, 16, 8), qs = random_matrix(rng, 16, 8),
                              qr = random_matrix(rng, 16, 8);
        MixParams p;
        p.beta = u(rng);
        p.zeta = 0.0;
        worst = std::max(worst, (blend_queries(qc, qs, qr, p) - qr).cwiseAbs().maxCoeff());
        p.zeta = 1.0;
        p.beta = 1.0;
        worst = std::max(worst, (blend_queries(qc, qs, qr, p) - qc).cwiseAbs().maxCoeff());
        p.beta = 0.0;
        worst = std::max(worst, (blend_queries(qc, qs, qr, p) - qs).cwiseAbs().maxCoeff());
        p.zeta = u(rng);
        p.beta = u(rng);
        const BlendWeights w = blend_weights(p);
        worst_sum = std::max(worst_sum, std::abs(w.color + w.contour + w.reference - 1.0));
    }
    const double elapsed = seconds_since(t0);
    c.detail << "1000 triples, max endpoint err " << worst << ", max |sum-1| " << worst_sum;
    c.require(worst <= 1e-12, "endpoint error <= 1e-12");
    c.require(worst_sum <= 1e-12, "coefficients sum to 1");
    c.require(elapsed < 1.0, "runtime < 1 s");
}

//
// Mixed attention
//

Eigen::MatrixXd naive_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k, const Eigen::MatrixXd& v,
                                std::vector<double>* row_sums) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q.rows(), v.cols());
    for (int i = 0; i < q.rows(); ++i) {
        std::vector<double> w(static_cast<std::size_t>(k.rows()));
        double mx = -INFINITY;
        for (int j = 0; j < k.rows(); ++j) {
            double dot = 0.0;
            for (int d = 0; d < q.cols(); ++d) dot += q(i, d) * k(j, d);
            w[j] = dot / std::sqrt(static_cast<double>(q.cols()));
            mx = std::max(mx, w[j]);
        }
        double z = 0.0;
        for (double& x : w) z += (x = std::exp(x - mx));
        double s = 0.0;
        for (int j = 0; j < k.rows(); ++j) {
            s += w[j] / z;
            for (int col = 0; col < v.cols(); ++col) out(i, col) += w[j] / z * v(j, col);
        }
        if (row_sums) row_sums->push_back(s);
    }
    return out;
}

void attention_oracle(Check& c) {
    std::mt19937_64 rng(11);
    double worst = 0.0, worst_rows = 0.0;
    const auto t0 = Clock::now();
    for (int i = 0; i < 100; ++i) {
        const Eigen::MatrixXd q = random_matrix(rng, 8, 8, 2.0), k = random_matrix(rng, 16, 8, 2.0),
                              v = random_matrix(rng, 16, 8);
        const Eigen::MatrixXd got = mixed_attention(q, k, v, MixParams{});
        std::vector<double> sums;
        worst = std::max(worst, (got - naive_attention(q, k, v, &sums)).cwiseAbs().maxCoeff());
        // Row sums of the implementation's softmax: attend over a column of ones.
        const Eigen::MatrixXd rows = mixed_attention(q, k, Eigen::MatrixXd::Ones(16, 1), MixParams{});
        worst_rows = std::max(worst_rows, (rows.array() - 1.0).abs().maxCoeff());
        for (double s : sums) worst_rows = std::max(worst_rows, std::abs(s - 1.0));
    }
    const double elapsed = seconds_since(t0);
    c.detail << "100 instances (8 queries x 16 keys, d=8), max err " << worst << ", max |rowsum-1| " << worst_rows;
    c.require(worst <= 1e-6, "oracle match within 1e-6");
    c.require(worst_rows <= 1e-6, "rows sum to 1 within 1e-6");
    c.require(elapsed < 5.0, "runtime < 5 s");
}

//
// DDIM
//

// Pinned fixture: the S=50 round-trip gain of eps = 0.1 z under the default
// schedule, computed by an independent scalar recurrence.
constexpr double kLinearRoundTripGain = 1.019037688;

void ddim_roundtrip(Check& c) {
    const auto t0 = Clock::now();
    const NoiseSchedule noise = make_schedule(1000, BetaSpec::stable_diffusion());
    GaussianSource g(2024);
    LatentGrid z0(4, 16, 16);
    for (double& v : z0.values) v = g.next();

    // Both denoisers on the 4-channel Haar latent.
    auto haar = [](MockBackendConfig cfg) {
        cfg.autoencoder = MockBackendConfig::Autoencoder::haar;
        return cfg;
    };
    MockBackend zero(haar(MockBackendConfig::zero()));
    const DdimSchedule s50(noise, 50), s10(noise, 10);
    const double zero_err = sample(invert(z0, zero, s50).final_latent(), zero, s50).max_abs_diff(z0);

    MockBackend linear(haar(MockBackendConfig::linear(0.1)));
    const LatentGrid back50 = sample(invert(z0, linear, s50).final_latent(), linear, s50);
    const LatentGrid back10 = sample(invert(z0, linear, s10).final_latent(), linear, s10);
    const double err50 = back50.max_abs_diff(z0), err10 = back10.max_abs_diff(z0);
    double gain_dev = 0.0;
    for (std::size_t i = 0; i < z0.size(); ++i)
        gain_dev = std::max(gain_dev, std::abs(back50.values[i] - kLinearRoundTripGain * z0.values[i]));
    const double elapsed = seconds_since(t0);

    c.detail << "zero err " << zero_err << "; linear 16x16x4 S=50 max err " << err50 << " (bound 1e-3), S=10 "
             << err10 << "; deviation from pinned gain " << kLinearRoundTripGain << ": " << gain_dev;
    c.require(zero_err <= 1e-12, "zero denoiser exact to 1e-12");
    c.require(err50 <= 1e-3, "linear round trip <= 1e-3 at S=50");
    c.require(err50 <= err10, "error at S=50 <= error at S=10");
    c.require(gain_dev <= 1e-8, "matches the pinned fixture gain");
    c.require(elapsed < 10.0, "runtime < 10 s");
}

void schedule_invariants(Check& c) {
    const NoiseSchedule s = make_schedule(1000, BetaSpec::stable_diffusion());
    bool decreasing = true;
    double worst = 0.0, prod = 1.0;
    for (std::size_t t = 1; t < s.alpha_bars.size(); ++t) {
        decreasing = decreasing && s.alpha_bars[t] < s.alpha_bars[t - 1];
        prod *= 1.0 - s.betas[t - 1];
        worst = std::max(worst, std::abs(s.alpha_bars[t] - prod));
    }
    c.detail << "T=1000, abar_0=" << s.alpha_bars[0] << ", abar_T=" << s.alpha_bars.back()
             << ", max cumprod err " << worst;
    c.require(s.alpha_bars[0] == 1.0, "abar_0 = 1");
    c.require(decreasing, "strictly decreasing");
    c.require(worst <= 1e-12, "cumulative product consistent to 1e-12");
}

//
// Bank contract
//

SketchJob default_job() {
    SketchJob job;
    job.color = testing::color_fixture();
    job.reference = testing::reference_fixture();
    return job;
}

void bank_contract(Check& c) {
    SketchJob job = default_job();
    job.resolution = 128;
    job.steps = 10;

    SketchPipeline pipe(make_backend("mock"));
    const GridResult grid = pipe.interpolation_grid({job, {0.0, 0.5, 1.0}, {0.0, 0.5, 1.0}});
    std::size_t ok_cells = 0;
    for (const auto& cell : grid.cells) ok_cells += cell.result.has_value();

    const InversionSet inv = pipe.prepare(job);
    const fs::path path = fs::temp_directory_path() / "mixsa_acceptance_bank.msab";
    save_cache(inv.bank, path);
    const AttentionBank loaded = load_cache(path);
    const bool identical = serialize(loaded) == serialize(inv.bank) && read_file(path) == serialize(inv.bank);
    fs::remove(path);

    SketchJob other = job;
    other.steps = 12;
    bool aborted = false;
    try {
        pipe.generate(other, inv);
    } catch (const Error& e) {
        aborted = e.kind() == ErrorKind::hash_mismatch;
    }

    c.detail << "3x3 grid: " << ok_cells << " cells, " << grid.inversions << " inversions; cache "
             << inv.bank.size() << " tensors byte-identical=" << (identical ? "yes" : "no")
             << "; mismatched schedule aborted=" << (aborted ? "yes" : "no");
    c.require(ok_cells == 9, "all cells generated");
    c.require(grid.inversions == 3, "exactly 3 inversions");
    c.require(identical, "cache round trip byte-identical");
    c.require(aborted, "schedule-hash mismatch aborts generation");
}

//
// RCD and its diagnostics
//

void rcd_properties(Check& c) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> d(0, 255);
    bool gap_free = true, idempotent = true;
    for (int trial = 0; trial < 20; ++trial) {
        ImageBuffer img(48, 48, trial % 2 ? 3 : 1);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(d(rng));
        const ImageBuffer out = apply_rcd(img, RcdParams{});
        for (auto p : out.pixels) gap_free = gap_free && !(p > 230 && p < 255);
        const ImageBuffer once = binarize_extremes(to_gray(img), RcdParams{});
        idempotent = idempotent && binarize_extremes(once, RcdParams{}) == once;
    }

    const auto means = mean_drift_diagnostic(ImageBuffer(16, 16, 1, 255), 8);
    double worst_ratio = 0.0;
    for (std::size_t i = 1; i < means.size(); ++i) worst_ratio = std::max(worst_ratio, std::abs(means[i] / means[i - 1] - 0.5));

    const NoiseSchedule s = make_schedule(1000, BetaSpec::stable_diffusion());
    const ImageBuffer board = checkerboard(64, 2);
    bool bands = true;
    std::ostringstream band_text;
    for (int t : {50, 250, 500, 750, 999}) {
        const BandErrors e = band_reconstruction_error(board, s, t);
        bands = bands && e.high_band_error >= e.low_band_error;
        band_text << " t" << t << ":" << e.high_band_error << ">=" << e.low_band_error;
    }

    c.detail << "no (230,255) pixels=" << (gap_free ? "yes" : "no") << ", idempotent=" << (idempotent ? "yes" : "no")
             << ", drift ratio max |r-0.5| " << worst_ratio << ", bands" << band_text.str();
    c.require(gap_free, "no pixels in (230,255)");
    c.require(idempotent, "binarization idempotent");
    c.require(worst_ratio <= 1e-12, "mean halves each step");
    c.require(bands, "high-band error >= low-band error");
}

//
// Metrics
//

FeatureSet exact_gaussian(int n, const Eigen::VectorXd& mean, const Eigen::VectorXd& var, unsigned seed) {
    std::mt19937_64 rng(seed);
    FeatureSet x = random_matrix(rng, n, static_cast<int>(mean.size()));
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = x.transpose() * x / (n - 1);
    const Eigen::MatrixXd l = cov.llt().matrixL();
    x = l.triangularView<Eigen::Lower>().solve(x.transpose()).transpose();
    for (int j = 0; j < x.cols(); ++j) x.col(j) *= std::sqrt(var(j));
    x.rowwise() += mean.transpose();
    return x;
}

void metric_properties(Check& c) {
    const ImageBuffer img = testing::color_fixture(64);
    const double s = ssim(img, img);
    const double p = psnr(ImageBuffer(32, 32, 1, 0), ImageBuffer(32, 32, 1, 255));

    std::mt19937_64 rng(3);
    const FeatureSet feats = random_matrix(rng, 64, 8);
    const double fid_self = fid(feats, feats).value;

    Eigen::VectorXd m1(4), m2(4), v1(4), v2(4);
    m1 << 0.0, 1.0, -2.0, 0.5;
    m2 << 1.0, 1.0, 0.0, 0.0;
    v1 << 1.0, 0.25, 2.0, 4.0;
    v2 << 4.0, 1.0, 2.0, 0.5;
    double closed = (m1 - m2).squaredNorm();
    for (int i = 0; i < 4; ++i) closed += v1(i) + v2(i) - 2.0 * std::sqrt(v1(i) * v2(i));
    const double fid_gauss = fid(exact_gaussian(400, m1, v1, 1), exact_gaussian(300, m2, v2, 2)).value;
    const double kid_self = kid(feats, feats);

    c.detail << "SSIM(x,x)=" << s << ", PSNR(0,255)=" << p << " dB, FID(self)=" << fid_self << ", FID two-Gaussian "
             << fid_gauss << " vs closed form " << closed << ", KID(self)=" << kid_self;
    c.require(std::abs(s - 1.0) <= 1e-12, "SSIM(identical) = 1");
    c.require(std::abs(p) <= 1e-12, "PSNR(all-0, all-255) = 0 dB");
    c.require(std::abs(fid_self) <= 1e-6, "FID(self) within 1e-6");
    c.require(std::abs(fid_gauss - closed) <= 1e-4, "closed-form FID within 1e-4");
    c.require(std::abs(kid_self) <= 1e-3, "KID(self) within 1e-3");
}

//
// Contours
//

void contour_properties(Check& c) {
    bool blank = true;
    for (std::uint8_t v : {0, 128, 255}) blank = blank && white_fraction(canny_contours(testing::constant_image(64, v), 0.55)) == 1.0;

    // Five-image fixture set: the two pipeline fixtures, a checkerboard, a
    // disc on a ramp and seeded noise.
    std::vector<ImageBuffer> set{testing::color_fixture(128), testing::reference_fixture(128), checkerboard(128, 8)};
    ImageBuffer disc(128, 128, 3);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            const bool in = (x - 64) * (x - 64) + (y - 64) * (y - 64) < 40 * 40;
            for (int ch = 0; ch < 3; ++ch) disc.at(x, y, ch) = static_cast<std::uint8_t>(in ? 30 + 60 * ch : 2 * x);
        }
    set.push_back(disc);
    ImageBuffer noise(128, 128, 1);
    std::mt19937 rng(1);
    for (auto& p : noise.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
    set.push_back(noise);

    bool monotone = true;
    std::ostringstream counts;
    for (std::size_t i = 0; i < set.size(); ++i) {
        std::size_t prev = SIZE_MAX;
        counts << (i ? "; " : "") << "img" << i << ":";
        for (double a : {0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 0.95}) {
            const std::size_t n = stroke_pixel_count(canny_contours(set[i], a));
            monotone = monotone && n <= prev;
            prev = n;
            counts << " " << n;
        }
    }
    c.detail << "constant images all-white=" << (blank ? "yes" : "no") << ", stroke counts by alpha " << counts.str();
    c.require(blank, "constant image gives all-white map");
    c.require(monotone, "stroke count non-increasing in alpha");
}

//
// End to end and ablations
//

struct EndToEnd {
    SketchResult result;
    InversionSet inversions;
};

void end_to_end(Check& c, SketchPipeline& pipe, std::optional<EndToEnd>& keep) {
    const fs::path out = fs::temp_directory_path() / "mixsa_acceptance_e2e";
    fs::remove_all(out);
    const SketchJob job = default_job();

    const auto t0 = Clock::now();
    const SketchResult first = pipe.extract_sketch(job);
    const fs::path dir = write_result(first, out);
    const double elapsed = seconds_since(t0);

    const auto png = read_file(dir / "sketch.png");
    const double white = white_fraction(decode_image(png));
    const SketchResult second = pipe.extract_sketch(job);
    const bool identical = encode_png(second.sketch) == png && second.descriptor_json == first.descriptor_json;

    c.detail << "512x512, S=" << job.steps << ", zeta=" << job.mix.zeta << ", beta=" << job.mix.beta
             << ", alpha=" << job.contour.alpha << ": " << elapsed << " s, white fraction " << white
             << ", rerun byte-identical=" << (identical ? "yes" : "no");
    c.require(elapsed < 30.0, "completes in < 30 s");
    c.require(white >= 0.5, "white fraction >= 0.5");
    c.require(identical, "same-seed rerun byte-identical");
    keep = EndToEnd{first, pipe.prepare(job)};
    fs::remove_all(out);
}

void ablations(Check& c, SketchPipeline& pipe, const std::optional<EndToEnd>& base) {
    if (!base) {
        c.require(false, "end-to-end baseline available");
        return;
    }
    const SketchJob job = default_job();
    const std::string base_hash = content_hash(base->result.sketch);
    c.require(content_hash(pipe.generate(job, base->inversions).sketch) == base_hash, "baseline reproduces");

    struct Flag {
        const char* name;
        bool AblationFlags::*member;
    };
    for (const Flag f : {Flag{"initial_contour", &AblationFlags::initial_contour}, Flag{"msa", &AblationFlags::msa},
                         Flag{"dct", &AblationFlags::dct}, Flag{"rcd", &AblationFlags::rcd}}) {
        SketchJob off = job;
        off.ablation.*(f.member) = false;
        const SketchResult r = pipe.generate(off, base->inversions);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < r.sketch.pixels.size(); ++i) changed += r.sketch.pixels[i] != base->result.sketch.pixels[i];
        const bool differs = content_hash(r.sketch) != base_hash;
        c.detail << (c.detail.tellp() > 0 ? "; " : "") << f.name << " off: " << changed << " px changed";
        c.require(differs, std::string(f.name) + " off changes the output hash");
    }
}

}  // namespace

int main() {
    set_log_sink([](LogLevel, std::string_view) {});
    std::printf("mixsa %s acceptance suite\n", kVersion);

    criterion("blend-endpoints", blend_endpoints);
    criterion("mixed-attention", attention_oracle);
    criterion("ddim-roundtrip", ddim_roundtrip);
    criterion("schedule-invariants", schedule_invariants);
    criterion("bank-contract", bank_contract);
    criterion("rcd", rcd_properties);
    criterion("metrics", metric_properties);
    criterion("contour", contour_properties);

    SketchPipeline pipe(make_backend("mock"));
    std::optional<EndToEnd> e2e;
    criterion("end-to-end-mock", [&](Check& c) { end_to_end(c, pipe, e2e); });
    criterion("ablation-hooks", [&](Check& c) { ablations(c, pipe, e2e); });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
