#include "fixtures.hpp"

#include "mixsa/common.hpp"
#include "mixsa/metrics.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

using namespace mixsa;

namespace {

// Samples whose mean is exactly `mean` and whose unbiased covariance is
// exactly diag(var): whiten a random draw, then scale.
FeatureSet exact_gaussian(int n, const Eigen::VectorXd& mean, const Eigen::VectorXd& var, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    const int d = static_cast<int>(mean.size());
    FeatureSet x(n, d);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = x.transpose() * x / (n - 1);
    const Eigen::MatrixXd l = cov.llt().matrixL();
    x = (l.triangularView<Eigen::Lower>().solve(x.transpose())).transpose();
    for (int j = 0; j < d; ++j) x.col(j) *= std::sqrt(var(j));
    x.rowwise() += mean.transpose();
    return x;
}

double poly(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
    return std::pow(a.dot(b) / static_cast<double>(a.size()) + 1.0, 3);
}

}  // namespace

TEST_CASE("PSNR") {
    const ImageBuffer black(8, 8, 1, 0), white(8, 8, 1, 255);
    CHECK(psnr(black, white) == doctest::Approx(0.0));
    CHECK(psnr(black, black) == kPsnrCap);
    ImageBuffer one = black;
    one.at(0, 0) = 10;
    CHECK(psnr(black, one) == doctest::Approx(10 * std::log10(255.0 * 255.0 / (100.0 / 64))));
    CHECK_THROWS_AS(psnr(black, ImageBuffer(4, 4, 1)), Error);
}

TEST_CASE("SSIM") {
    const ImageBuffer img = testing::color_fixture(32);
    CHECK(ssim(img, img) == doctest::Approx(1.0));
    ImageBuffer dark = img;
    for (auto& p : dark.pixels) p /= 2;
    const double s = ssim(img, dark);
    CHECK(s < 1.0);
    CHECK(s > 0.0);
    CHECK(ssim(ImageBuffer(5, 5, 1, 30), ImageBuffer(5, 5, 1, 30)) == doctest::Approx(1.0));
}

TEST_CASE("FID of a set against itself is zero") {
    const FeatureSet x = exact_gaussian(50, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Ones(4), 1);
    CHECK(std::abs(fid(x, x).value) < 1e-6);
}

TEST_CASE("FID matches the closed form for diagonal Gaussians") {
    Eigen::VectorXd m1(3), m2(3), v1(3), v2(3);
    m1 << 0, 1, 2;
    m2 << 1, 1, 0;
    v1 << 1, 2, 0.5;
    v2 << 4, 2, 2;
    const FeatureSet a = exact_gaussian(200, m1, v1, 2), b = exact_gaussian(300, m2, v2, 3);
    double want = (m1 - m2).squaredNorm();
    for (int i = 0; i < 3; ++i) want += v1(i) + v2(i) - 2 * std::sqrt(v1(i) * v2(i));
    const FidResult r = fid(a, b);
    CHECK(r.value == doctest::Approx(want).epsilon(1e-6));
    CHECK_FALSE(r.jittered);
}

TEST_CASE("FID jitters singular covariances") {
    FeatureSet flat(10, 3);
    flat.setRandom();
    flat.col(2).setZero();
    const FidResult r = fid(flat, flat);
    CHECK(r.jittered);
    CHECK(std::abs(r.value) < 1e-3);
}

TEST_CASE("KID") {
    FeatureSet x(20, 5), y(20, 5);
    x.setRandom();
    y.setRandom();
    y.array() += 0.5;
    CHECK(std::abs(kid(x, x)) < 1e-12);

    // Paired U-statistic by explicit loops.
    double s = 0;
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            if (i == j) continue;
            s += poly(x.row(i), x.row(j)) + poly(y.row(i), y.row(j)) - poly(x.row(i), y.row(j)) -
                 poly(x.row(j), y.row(i));
        }
    CHECK(kid(x, y) == doctest::Approx(s / (20.0 * 19.0)).epsilon(1e-10));
    CHECK(kid(x, y) > 0);

    FeatureSet z(13, 5);
    z.setRandom();
    CHECK(std::isfinite(kid(x, z)));
}

TEST_CASE("LPIPS with the mock extractor") {
    const MockExtractor ex;
    const ImageBuffer a = testing::color_fixture(16);
    CHECK(lpips(a, a, ex) == doctest::Approx(0.0));
    CHECK(lpips(a, invert(a), ex) > 0.0);
    CHECK(ex.global_features(a).size() == 19);
}

TEST_CASE("metric selection parsing") {
    const MetricSelection s = MetricSelection::parse("psnr,fid");
    CHECK(s.psnr);
    CHECK(s.fid);
    CHECK_FALSE(s.ssim);
    CHECK_THROWS_AS(MetricSelection::parse("psnr,bleu"), Error);
}

TEST_CASE("evaluate skips failed items in aggregates") {
    const ImageBuffer a = testing::color_fixture(16), b = invert(a);
    std::vector<EvalItem> items{
        {"same", a, a, ""},
        {"diff", b, a, ""},
        {"broken", std::nullopt, a, "decoder failed"},
    };
    const MockExtractor ex;
    const MetricReport r = evaluate(items, MetricSelection::parse("psnr,ssim,lpips,fid,kid"), &ex, "gray");
    CHECK(r.item_count == 3);
    CHECK(r.success_count == 2);
    REQUIRE(r.psnr.has_value());
    CHECK(r.psnr->count == 2);
    CHECK(r.items[2].error == "decoder failed");
    CHECK(r.fid.has_value());
    CHECK(r.extractor_id == "mock-pixels-v1");
    CHECK(r.to_table().find("broken") != std::string::npos);
    CHECK(r.to_json().find("\"success_count\"") != std::string::npos);

    const MetricReport no_ex = evaluate(items, MetricSelection::parse("psnr,lpips"), nullptr);
    CHECK_FALSE(no_ex.lpips.has_value());
    CHECK_FALSE(no_ex.notices.empty());
}

TEST_CASE("PSNR of one saturated pixel is 10 log10 N") {
    const ImageBuffer black(10, 10, 1, 0);
    ImageBuffer one = black;
    one.at(3, 7) = 255;
    CHECK(psnr(black, one) == doctest::Approx(10 * std::log10(100.0)));
}

TEST_CASE("SSIM closed forms") {
    // Constant images: the structure terms are C2 / C2, leaving the luminance term.
    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double want = (2 * 40.0 * 200.0 + c1) / (40.0 * 40.0 + 200.0 * 200.0 + c1);
    CHECK(ssim(ImageBuffer(16, 16, 1, 40), ImageBuffer(16, 16, 1, 200)) == doctest::Approx(want).epsilon(1e-9));

    std::mt19937 rng(4);
    std::uniform_int_distribution<int> d(0, 255);
    ImageBuffer noise(24, 24, 1);
    for (auto& p : noise.pixels) p = static_cast<std::uint8_t>(d(rng));
    CHECK(ssim(noise, invert(noise)) < 0.0);
}

TEST_CASE("FID between shifted isotropic Gaussians is the squared shift") {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(4), shifted(4), var = Eigen::VectorXd::Constant(4, 1.5);
    shifted << 1, -2, 0.5, 0;
    const FeatureSet a = exact_gaussian(100, m, var, 7), b = exact_gaussian(100, shifted, var, 8);
    CHECK(fid(a, b).value == doctest::Approx(shifted.squaredNorm()).epsilon(1e-6));
}

TEST_CASE("KID grows with cluster separation") {
    FeatureSet x(30, 4), noise(30, 4);
    x.setRandom();
    noise.setRandom();
    double prev = 0;
    for (double sep : {1.0, 2.0, 4.0}) {
        FeatureSet y = noise * 0.1;
        y.array() += sep;
        FeatureSet xs = x * 0.1;
        const double k = kid(xs, y);
        CHECK(k > prev);
        prev = k;
    }
}

TEST_CASE("LPIPS mock by hand") {
    // Red pixel: (1, 0, 0, 1)/sqrt2; black pixel: (0, 0, 0, 1). Squared distance
    // 1/2 + (1 - 1/sqrt2)^2 at every position.
    ImageBuffer red(2, 2, 3, 0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) red.at(x, y, 0) = 255;
    const double want = 0.5 + std::pow(1 - 1 / std::sqrt(2.0), 2);
    CHECK(lpips(red, ImageBuffer(2, 2, 3, 0), MockExtractor{}) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("report table has one row per item and a mean row") {
    const ImageBuffer a = testing::color_fixture(16);
    const std::vector<EvalItem> items{{"first", a, a, ""}, {"second", invert(a), a, ""}};
    const std::string table = evaluate(items, MetricSelection::parse("psnr,ssim"), nullptr).to_table();
    int lines = 0;
    for (char ch : table) lines += ch == '\n';
    CHECK(table.find("first") != std::string::npos);
    CHECK(table.find("second") != std::string::npos);
    CHECK(table.find("mean") != std::string::npos);
    CHECK(lines == 4);  // header, two items, mean
}
