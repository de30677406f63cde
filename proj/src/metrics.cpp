// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/metrics.hpp"

#include "mixsa/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mixsa {

namespace {

void check_same_size(const ImageBuffer& a, const ImageBuffer& b) {
    validate(a);
    validate(b);
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw Error(ErrorKind::dimension_mismatch, "images differ in size or channel count");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) sum += k[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    for (auto& v : k) v /= sum;
    return k;
}

// Separable "valid" correlation of a w x h plane with kernel k in both axes.
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * in[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

void check_feature_sets(const FeatureSet& a, const FeatureSet& b) {
    if (a.rows() < 2 || b.rows() < 2)
        throw Error(ErrorKind::invalid_argument, "need at least two feature vectors per set");
    if (a.cols() != b.cols() || a.cols() == 0)
        throw Error(ErrorKind::dimension_mismatch, "feature dimensions differ");
    if (!a.allFinite() || !b.allFinite()) throw Error(ErrorKind::non_finite, "non-finite feature values");
}

Eigen::MatrixXd covariance(const FeatureSet& x, const Eigen::RowVectorXd& mean) {
    Eigen::MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

bool is_singular(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    return es.eigenvalues().minCoeff() <= 1e-12 * scale;
}

double poly_kernel(const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    const double v = x.dot(y) / static_cast<double>(x.size()) + 1.0;
    return v * v * v;
}

Summary summarize(const std::vector<double>& values) {
    Summary s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= s.count;
    if (s.count > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / (s.count - 1));
    }
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    check_same_size(a, b);
    double se = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        se += d * d;
    }
    if (se == 0.0) return kPsnrCap;
    const double mse = se / static_cast<double>(a.pixels.size());
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    check_same_size(a, b);
    const ImageBuffer ga = to_gray(a), gb = to_gray(b);
    const int w = ga.width, h = ga.height;
    const int size = std::min({11, w, h});
    const auto k = gaussian_kernel(size, 1.5);

    const std::size_t n = ga.pixel_count();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = ga.pixels[i];
        y[i] = gb.pixels[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
    const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k), sxy = filter_valid(xy, w, h, k);

    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    double total = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double va = sxx[i] - mx[i] * mx[i];
        const double vb = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mx.size());
}

FidResult fid(const FeatureSet& a, const FeatureSet& b) {
    check_feature_sets(a, b);
    const Eigen::RowVectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
    Eigen::MatrixXd sa = covariance(a, mu_a), sb = covariance(b, mu_b);

    FidResult out;
    if (is_singular(sa) || is_singular(sb)) {
        const auto jitter = 1e-6 * Eigen::MatrixXd::Identity(sa.rows(), sa.cols());
        sa += jitter;
        sb += jitter;
        out.jittered = true;
    }
    // Tr((Sa Sb)^(1/2)) = Tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)); the inner product is symmetric PSD.
    const Eigen::MatrixXd ra = psd_sqrt(sa);
    const Eigen::MatrixXd inner = ra * sb * ra;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    out.value = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    out.value = std::max(out.value, 0.0);
    return out;
}

double kid(const FeatureSet& a, const FeatureSet& b) {
    check_feature_sets(a, b);
    const Eigen::Index m = a.rows(), n = b.rows();
    if (m == n) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) {
                if (i == j) continue;
                acc += poly_kernel(a.row(i), a.row(j)) + poly_kernel(b.row(i), b.row(j)) -
                       poly_kernel(a.row(i), b.row(j)) - poly_kernel(a.row(j), b.row(i));
            }
        return acc / static_cast<double>(m * (m - 1));
    }
    double kaa = 0.0, kbb = 0.0, kab = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            if (i != j) kaa += poly_kernel(a.row(i), a.row(j));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) kbb += poly_kernel(b.row(i), b.row(j));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j) kab += poly_kernel(a.row(i), b.row(j));
    return kaa / static_cast<double>(m * (m - 1)) + kbb / static_cast<double>(n * (n - 1)) -
           2.0 * kab / static_cast<double>(m * n);
}

double lpips(const ImageBuffer& a, const ImageBuffer& b, const FeatureExtractor& extractor) {
    check_same_size(to_rgb(a), to_rgb(b));
    const auto fa = extractor.spatial_features(to_rgb(a));
    const auto fb = extractor.spatial_features(to_rgb(b));
    if (fa.size() != fb.size()) throw Error(ErrorKind::adapter, "extractor returned differing layer counts");

    constexpr double eps = 1e-10;
    double total = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        if (fa[l].rows() != fb[l].rows() || fa[l].cols() != fb[l].cols() || fa[l].cols() == 0)
            throw Error(ErrorKind::adapter, "extractor layer shapes differ");
        double layer = 0.0;
        for (Eigen::Index p = 0; p < fa[l].cols(); ++p) {
            const Eigen::VectorXd ua = fa[l].col(p) / (fa[l].col(p).norm() + eps);
            const Eigen::VectorXd ub = fb[l].col(p) / (fb[l].col(p).norm() + eps);
            layer += (ua - ub).squaredNorm();
        }
        total += layer / static_cast<double>(fa[l].cols());
    }
    return total;
}

std::vector<Eigen::MatrixXd> MockExtractor::spatial_features(const ImageBuffer& img) const {
    const ImageBuffer rgb = to_rgb(img);
    Eigen::MatrixXd f(4, static_cast<Eigen::Index>(rgb.pixel_count()));
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) f(c, static_cast<Eigen::Index>(i)) = rgb.pixels[i * 3 + c] / 255.0;
        f(3, static_cast<Eigen::Index>(i)) = 1.0;
    }
    return {f};
}

Eigen::VectorXd MockExtractor::global_features(const ImageBuffer& img) const {
    const ImageBuffer rgb = to_rgb(img);
    const ImageBuffer gray = to_gray(rgb);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(19);
    std::vector<int> counts(16, 0);
    for (int y = 0; y < gray.height; ++y)
        for (int x = 0; x < gray.width; ++x) {
            const int cell = (y * 4 / gray.height) * 4 + x * 4 / gray.width;
            f(cell) += gray.at(x, y, 0) / 255.0;
            ++counts[cell];
        }
    for (int c = 0; c < 16; ++c)
        if (counts[c]) f(c) /= counts[c];
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c) f(16 + c) += rgb.pixels[i * 3 + c] / 255.0;
    f.tail(3) /= static_cast<double>(rgb.pixel_count());
    return f;
}

MetricSelection MetricSelection::parse(const std::string& list) {
    MetricSelection s{false, false, false, false, false};
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (name.empty()) continue;
        if (name == "psnr") s.psnr = true;
        else if (name == "ssim") s.ssim = true;
        else if (name == "lpips") s.lpips = true;
        else if (name == "fid") s.fid = true;
        else if (name == "kid") s.kid = true;
        else throw Error(ErrorKind::invalid_argument, "unknown metric '" + name + "'");
    }
    return s;
}

std::string MetricSelection::describe() const {
    std::string out;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!out.empty()) out += ',';
        out += name;
    };
    add(psnr, "psnr");
    add(ssim, "ssim");
    add(lpips, "lpips");
    add(fid, "fid");
    add(kid, "kid");
    return out;
}

MetricReport evaluate(const std::vector<EvalItem>& items, const MetricSelection& sel,
                      const FeatureExtractor* extractor, const std::string& preprocessing) {
    MetricReport report;
    report.item_count = static_cast<int>(items.size());
    report.preprocessing = preprocessing.empty() ? "gray; output resized to ground truth" : preprocessing;
    if (extractor) report.extractor_id = extractor->id();

    const bool want_features = sel.lpips || sel.fid || sel.kid;
    if (want_features && !extractor) report.notices.push_back("no feature extractor: lpips/fid/kid omitted");

    std::vector<double> ps, ss, ls;
    std::vector<Eigen::VectorXd> feats_out, feats_gt;
    bool no_truth = false;
    for (const auto& item : items) {
        ItemMetrics row;
        row.id = item.id;
        try {
            if (!item.error.empty()) throw Error(ErrorKind::generation, item.error);
            if (!item.output) throw Error(ErrorKind::missing_key, "no output image");
            if (!item.ground_truth) {
                row.ok = true;
                no_truth = true;
                ++report.success_count;
                report.items.push_back(std::move(row));
                continue;
            }
            const ImageBuffer gt = to_gray(*item.ground_truth);
            ImageBuffer out = to_gray(*item.output);
            if (out.width != gt.width || out.height != gt.height) out = resize_bilinear(out, gt.width, gt.height);
            if (sel.psnr) row.psnr = psnr(out, gt);
            if (sel.ssim) row.ssim = ssim(out, gt);
            if (extractor && sel.lpips) row.lpips = lpips(out, gt, *extractor);
            if (extractor && (sel.fid || sel.kid)) {
                feats_out.push_back(extractor->global_features(to_rgb(out)));
                feats_gt.push_back(extractor->global_features(to_rgb(gt)));
            }
            row.ok = true;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            row.psnr.reset();
            row.ssim.reset();
            row.lpips.reset();
        }
        if (row.ok) {
            ++report.success_count;
            if (row.psnr) ps.push_back(*row.psnr);
            if (row.ssim) ss.push_back(*row.ssim);
            if (row.lpips) ls.push_back(*row.lpips);
        }
        report.items.push_back(std::move(row));
    }
    if (no_truth) report.notices.push_back("items without ground truth carry no metrics");
    if (!ps.empty()) report.psnr = summarize(ps);
    if (!ss.empty()) report.ssim = summarize(ss);
    if (!ls.empty()) report.lpips = summarize(ls);

    if (extractor && (sel.fid || sel.kid)) {
        if (feats_out.size() < 2) {
            report.notices.push_back("fid/kid need at least two successful items");
        } else {
            const auto dim = feats_out.front().size();
            FeatureSet a(static_cast<Eigen::Index>(feats_out.size()), dim), b(a.rows(), dim);
            for (std::size_t i = 0; i < feats_out.size(); ++i) {
                a.row(static_cast<Eigen::Index>(i)) = feats_out[i].transpose();
                b.row(static_cast<Eigen::Index>(i)) = feats_gt[i].transpose();
            }
            if (sel.fid) {
                const auto r = fid(a, b);
                report.fid = r.value;
                report.fid_jittered = r.jittered;
                if (r.jittered) report.notices.push_back("fid: singular covariance, 1e-6 diagonal jitter added");
            }
            if (sel.kid) report.kid = kid(a, b);
        }
    }
    return report;
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "id\tstatus\tpsnr\tssim\tlpips\n";
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("-"); };
    for (const auto& r : items)
        os << r.id << '\t' << (r.ok ? "ok" : "failed") << '\t' << opt(r.psnr) << '\t' << opt(r.ssim) << '\t'
           << opt(r.lpips) << '\n';
    auto mean = [](const std::optional<Summary>& s) { return s ? fmt(s->mean) : std::string("-"); };
    os << "mean\t" << success_count << '/' << item_count << '\t' << mean(psnr) << '\t' << mean(ssim) << '\t'
       << mean(lpips) << '\n';
    if (fid) os << "# fid\t" << fmt(*fid) << '\n';
    if (kid) os << "# kid\t" << fmt(*kid) << '\n';
    return os.str();
}

std::string MetricReport::to_json() const {
    using nlohmann::json;
    json j;
    j["extractor"] = extractor_id;
    j["preprocessing"] = preprocessing;
    j["item_count"] = item_count;
    j["success_count"] = success_count;
    j["notices"] = notices;
    json rows = json::array();
    for (const auto& r : items) {
        json row{{"id", r.id}, {"ok", r.ok}};
        if (!r.ok) row["error"] = r.error;
        if (r.psnr) row["psnr"] = *r.psnr;
        if (r.ssim) row["ssim"] = *r.ssim;
        if (r.lpips) row["lpips"] = *r.lpips;
        rows.push_back(std::move(row));
    }
    j["items"] = std::move(rows);
    json agg = json::object();
    auto put = [&](const char* name, const std::optional<Summary>& s) {
        if (s) agg[name] = {{"mean", s->mean}, {"std", s->stddev}, {"count", s->count}};
    };
    put("psnr", psnr);
    put("ssim", ssim);
    put("lpips", lpips);
    if (fid) agg["fid"] = {{"value", *fid}, {"jittered", fid_jittered}};
    if (kid) agg["kid"] = *kid;
    j["aggregate"] = std::move(agg);
    return j.dump(2);
}

}  // namespace mixsa
