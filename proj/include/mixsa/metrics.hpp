// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/image.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mixsa {

inline constexpr double kPsnrCap = 99.0;

// 10 log10(255^2 / MSE) over all channels; kPsnrCap when the images are equal.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Mean local SSIM on the gray images: 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, L = 255, evaluated at every position where the window
// fits. Images smaller than the window use a single window of their own size.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

// One feature vector per row.
using FeatureSet = Eigen::MatrixXd;

struct FidResult {
    double value = 0.0;
    // Set when a covariance was singular and 1e-6 was added to its diagonal.
    bool jittered = false;
};

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) with unbiased covariances.
FidResult fid(const FeatureSet& a, const FeatureSet& b);

// Unbiased MMD^2 with k(x, y) = (x.y / d + 1)^3. Equal-sized sets use the
// paired U-statistic, so a set against itself gives exactly 0.
double kid(const FeatureSet& a, const FeatureSet& b);

// Feature adapter for LPIPS/FID/KID. Inputs are replicated to RGB first.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;

    virtual std::string id() const = 0;
    // One matrix per layer: channels x spatial positions.
    virtual std::vector<Eigen::MatrixXd> spatial_features(const ImageBuffer& rgb) const = 0;
    virtual Eigen::VectorXd global_features(const ImageBuffer& rgb) const = 0;
    virtual bool thread_safe() const { return false; }
};

// Per layer: unit-normalize each position's channel vector, then average the
// squared L2 difference over positions; layers are summed with unit weights.
double lpips(const ImageBuffer& a, const ImageBuffer& b, const FeatureExtractor& extractor);

// Deterministic stand-in with no weights. Spatial: one layer holding
// (r, g, b, 1) per pixel with colors scaled to [0, 1]. Global: the gray image
// average-pooled to a 4x4 grid followed by the three channel means.
class MockExtractor final : public FeatureExtractor {
public:
    std::string id() const override { return "mock-pixels-v1"; }
    std::vector<Eigen::MatrixXd> spatial_features(const ImageBuffer& rgb) const override;
    Eigen::VectorXd global_features(const ImageBuffer& rgb) const override;
    bool thread_safe() const override { return true; }
};

struct MetricSelection {
    bool psnr = true;
    bool ssim = true;
    bool lpips = false;
    bool fid = false;
    bool kid = false;

    // Comma-separated names, e.g. "psnr,ssim,fid".
    static MetricSelection parse(const std::string& list);
    std::string describe() const;
};

struct EvalItem {
    std::string id;
    std::optional<ImageBuffer> output;
    std::optional<ImageBuffer> ground_truth;
    std::string error;  // non-empty marks a failed item
};

struct ItemMetrics {
    std::string id;
    bool ok = false;
    std::string error;
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> lpips;
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;
    int count = 0;
};

struct MetricReport {
    std::vector<ItemMetrics> items;
    std::optional<Summary> psnr, ssim, lpips;
    std::optional<double> fid, kid;
    bool fid_jittered = false;
    std::string extractor_id;
    std::string preprocessing;
    int item_count = 0;
    int success_count = 0;
    std::vector<std::string> notices;

    // Tab-separated table, one row per item plus a "mean" row.
    std::string to_table() const;
    std::string to_json() const;
};

// Aggregates only over successful items. Metrics needing an extractor are
// skipped with a notice when `extractor` is null; FID/KID need at least two
// successful items with ground truth.
MetricReport evaluate(const std::vector<EvalItem>& items, const MetricSelection& selection,
                      const FeatureExtractor* extractor, const std::string& preprocessing = {});

}  // namespace mixsa
