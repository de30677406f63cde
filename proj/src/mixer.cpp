// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/mixer.hpp"

#include "mixsa/common.hpp"

#include <algorithm>
#include <cmath>

namespace mixsa {

MixParams MixParams::clamped() const {
    MixParams out = *this;
    auto clamp01 = [](double v, const char* name) {
        if (std::isnan(v)) throw Error(ErrorKind::invalid_argument, std::string(name) + " is NaN");
        double c = std::clamp(v, 0.0, 1.0);
        if (c != v) log_warning(std::string(name) + " = " + std::to_string(v) + " clamped to " + std::to_string(c));
        return c;
    };
    out.zeta = clamp01(zeta, "zeta");
    out.beta = clamp01(beta, "beta");
    return out;
}

BlendWeights blend_weights(const MixParams& p) {
    const double beta = p.decompose_texture ? p.beta : 0.0;
    return {p.zeta * beta, p.zeta * (1.0 - beta), 1.0 - p.zeta};
}

Eigen::MatrixXd blend_queries(const Eigen::MatrixXd& qc, const Eigen::MatrixXd& qs,
                              const Eigen::MatrixXd& qr, const MixParams& p) {
    if (qc.rows() != qs.rows() || qc.cols() != qs.cols() || qc.rows() != qr.rows() || qc.cols() != qr.cols())
        throw Error(ErrorKind::dimension_mismatch, "query blend operands differ in shape");
    // Written in nested form so the zeta/beta endpoints reproduce an input exactly.
    const double beta = p.decompose_texture ? p.beta : 0.0;
    Eigen::MatrixXd qcs = beta * qc + (1.0 - beta) * qs;
    return p.zeta * qcs + (1.0 - p.zeta) * qr;
}

Eigen::MatrixXd mixed_attention(const Eigen::MatrixXd& qm, const Eigen::MatrixXd& kr, const Eigen::MatrixXd& vr,
                                const MixParams& p) {
    if (kr.rows() != vr.rows())
        throw Error(ErrorKind::dimension_mismatch, "reference K and V token counts differ");
    if (qm.cols() != kr.cols())
        throw Error(ErrorKind::dimension_mismatch, "query and key head dimensions differ");
    const double d = p.scale_d > 0 ? p.scale_d : static_cast<double>(qm.cols());
    Eigen::MatrixXd weights = (qm * kr.transpose()) / std::sqrt(d);
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
        const double m = weights.row(r).maxCoeff();
        weights.row(r) = (weights.row(r).array() - m).exp();
        weights.row(r) /= weights.row(r).sum();
    }
    return weights * vr;
}

MixController::MixController(const AttentionBank& bank, MixParams params)
    : bank_(bank), params_(params.clamped()) {}

std::optional<HeadMatrices> MixController::on_attention(const AttentionCall& call, AttentionTensors& tensors) {
    const int site = call.site.index;
    if (!params_.target_sites.contains(site)) return std::nullopt;

    const int t = call.timestep;
    const StoredTensor& qr = bank_.lookup({t, site, TensorKind::q, BankSource::reference});
    const StoredTensor& kr = bank_.lookup({t, site, TensorKind::k, BankSource::reference});
    const StoredTensor& vr = bank_.lookup({t, site, TensorKind::v, BankSource::reference});
    const BlendWeights w = blend_weights(params_);
    // A zero-weight source is never read, so it may be absent from the bank.
    const StoredTensor* qc = w.color != 0.0 ? &bank_.lookup({t, site, TensorKind::q, BankSource::color}) : nullptr;
    const StoredTensor* qs = w.contour != 0.0 ? &bank_.lookup({t, site, TensorKind::q, BankSource::contour}) : nullptr;

    HeadMatrices out;
    out.reserve(qr.size());
    for (std::size_t h = 0; h < qr.size(); ++h) {
        Eigen::MatrixXd qr_h = qr[h].cast<double>();
        Eigen::MatrixXd qc_h = qc ? Eigen::MatrixXd((*qc).at(h).cast<double>()) : Eigen::MatrixXd::Zero(qr_h.rows(), qr_h.cols());
        Eigen::MatrixXd qs_h = qs ? Eigen::MatrixXd((*qs).at(h).cast<double>()) : Eigen::MatrixXd::Zero(qr_h.rows(), qr_h.cols());
        Eigen::MatrixXd qm = blend_queries(qc_h, qs_h, qr_h, params_);
        out.push_back(mixed_attention(qm, kr.at(h).cast<double>(), vr.at(h).cast<double>(), params_));
    }
    if (!tensors.q.empty() && (out.size() != tensors.q.size() || out[0].rows() != tensors.q[0].rows()))
        throw Error(ErrorKind::dimension_mismatch,
                    "banked token grid at site " + std::to_string(site) + " does not match the generating latent");
    if (dump_ != nullptr) (*dump_)[{t, site}] = out;
    return out;
}

MixController make_controller(const AttentionBank& bank, const MixParams& params, std::uint64_t schedule_hash,
                              std::span<const int> timesteps) {
    bank.require_schedule(schedule_hash);
    std::vector<int> sites(params.target_sites.begin(), params.target_sites.end());
    // Generation never queries t = 0.
    std::vector<int> steps(timesteps.begin(), timesteps.end());
    std::erase(steps, 0);
    const BlendWeights w = blend_weights(params.clamped());
    std::vector<std::pair<BankSource, TensorKind>> required = {
        {BankSource::reference, TensorKind::q}, {BankSource::reference, TensorKind::k},
        {BankSource::reference, TensorKind::v}};
    if (w.color != 0.0) required.emplace_back(BankSource::color, TensorKind::q);
    if (w.contour != 0.0) required.emplace_back(BankSource::contour, TensorKind::q);
    bank.validate_complete(steps, sites, required);
    return MixController(bank, params);
}

}  // namespace mixsa
