// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/backend.hpp"

#include "mixsa/common.hpp"

#include <algorithm>
#include <cmath>

namespace mixsa {

LatentGrid::LatentGrid(int c, int h, int w, double fill, int timestep)
    : channels(c), height(h), width(w), timestep_tag(timestep),
      values(static_cast<std::size_t>(c) * h * w, fill) {}

bool LatentGrid::all_finite() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double LatentGrid::max_abs_diff(const LatentGrid& other) const {
    if (!same_shape(other)) throw Error(ErrorKind::dimension_mismatch, "latent shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m = std::max(m, std::abs(values[i] - other.values[i]));
    return m;
}

std::uint8_t signal_to_pixel(double s) {
    double p = std::round((s + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(p, 0.0, 255.0));
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::encoder: return "encoder";
        case Stage::middle: return "middle";
        case Stage::decoder: return "decoder";
    }
    return "unknown";
}

HeadMatrices softmax_attention(const AttentionTensors& t) {
    if (t.q.size() != t.k.size() || t.k.size() != t.v.size())
        throw Error(ErrorKind::dimension_mismatch, "head counts of Q, K, V differ");
    HeadMatrices out;
    out.reserve(t.q.size());
    for (std::size_t h = 0; h < t.q.size(); ++h) {
        const auto& q = t.q[h];
        const auto& k = t.k[h];
        const auto& v = t.v[h];
        if (q.cols() != k.cols() || k.rows() != v.rows())
            throw Error(ErrorKind::dimension_mismatch, "attention operand shapes disagree");
        Eigen::MatrixXd logits = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            double m = logits.row(r).maxCoeff();
            logits.row(r) = (logits.row(r).array() - m).exp();
            logits.row(r) /= logits.row(r).sum();
        }
        out.push_back(logits * v);
    }
    return out;
}

void check_divisible(const ImageBuffer& img, int factor) {
    validate(img);
    if (img.width % factor != 0 || img.height % factor != 0)
        throw Error(ErrorKind::dimension_mismatch,
                    "image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " is not divisible by the downsampling factor " + std::to_string(factor));
}

void check_finite(const LatentGrid& z) {
    if (!z.all_finite()) throw Error(ErrorKind::non_finite, "latent contains non-finite values");
}

HeadMatrices run_attention_site(const AttentionCall& call, AttentionTensors& tensors,
                                AttentionController* controller) {
    if (controller == nullptr) return softmax_attention(tensors);
    std::optional<HeadMatrices> replaced;
    try {
        replaced = controller->on_attention(call, tensors);
    } catch (...) {
        rethrow_with_context("attention controller at site " + std::to_string(call.site.index) + " (" +
                                 std::string(to_string(call.site.stage)) + "), t=" +
                                 std::to_string(call.timestep),
                             ErrorKind::generation);
    }
    if (!replaced) return softmax_attention(tensors);
    if (replaced->size() != tensors.q.size())
        throw Error(ErrorKind::generation, "controller returned wrong head count at site " +
                                               std::to_string(call.site.index));
    for (std::size_t h = 0; h < replaced->size(); ++h) {
        const auto& o = (*replaced)[h];
        if (o.rows() != tensors.q[h].rows() || o.cols() != tensors.v[h].cols())
            throw Error(ErrorKind::generation, "controller output shape mismatch at site " +
                                                   std::to_string(call.site.index));
    }
    return std::move(*replaced);
}

std::vector<int> default_target_sites() { return {10, 11}; }

}  // namespace mixsa
