// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/attnbank.hpp"

#include "binary_io.hpp"
#include "mixsa/common.hpp"
#include "mixsa/image.hpp"

namespace mixsa {

std::string_view to_string(TensorKind kind) {
    switch (kind) {
        case TensorKind::q: return "Q";
        case TensorKind::k: return "K";
        case TensorKind::v: return "V";
    }
    return "?";
}

std::string_view to_string(BankSource source) {
    switch (source) {
        case BankSource::reference: return "reference";
        case BankSource::color: return "color";
        case BankSource::contour: return "contour";
    }
    return "?";
}

std::string describe(const BankKey& key) {
    return "(t=" + std::to_string(key.timestep) + ", site=" + std::to_string(key.site) + ", " +
           std::string(to_string(key.kind)) + ", " + std::string(to_string(key.source)) + ")";
}

StoredTensor to_stored(const HeadMatrices& heads) {
    StoredTensor out;
    out.reserve(heads.size());
    for (const auto& h : heads) out.push_back(h.cast<float>());
    return out;
}

HeadMatrices to_heads(const StoredTensor& stored) {
    HeadMatrices out;
    out.reserve(stored.size());
    for (const auto& h : stored) out.push_back(h.cast<double>());
    return out;
}

void AttentionBank::record(const BankKey& key, StoredTensor tensor) {
    auto [it, inserted] = entries_.try_emplace(key, std::move(tensor));
    if (!inserted) throw Error(ErrorKind::duplicate_key, "bank already holds " + describe(key));
}

const StoredTensor& AttentionBank::lookup(const BankKey& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw Error(ErrorKind::missing_key, "bank has no entry " + describe(key));
    return it->second;
}

std::size_t AttentionBank::count(BankSource source, TensorKind kind) const {
    std::size_t n = 0;
    for (const auto& [key, _] : entries_) n += (key.source == source && key.kind == kind) ? 1 : 0;
    return n;
}

void AttentionBank::require_schedule(std::uint64_t schedule_hash) const {
    if (meta_.schedule_hash != schedule_hash)
        throw Error(ErrorKind::hash_mismatch, "attention bank was captured under schedule " +
                                                  to_hex(meta_.schedule_hash) + " but generation uses " +
                                                  to_hex(schedule_hash));
}

void AttentionBank::validate_complete(std::span<const int> timesteps, std::span<const int> sites) const {
    static constexpr std::pair<BankSource, TensorKind> all[] = {
        {BankSource::reference, TensorKind::q}, {BankSource::reference, TensorKind::k},
        {BankSource::reference, TensorKind::v}, {BankSource::color, TensorKind::q},
        {BankSource::contour, TensorKind::q},
    };
    validate_complete(timesteps, sites, all);
}

void AttentionBank::validate_complete(std::span<const int> timesteps, std::span<const int> sites,
                                      std::span<const std::pair<BankSource, TensorKind>> required) const {
    for (int t : timesteps) {
        for (int s : sites) {
            for (auto [source, kind] : required) {
                BankKey key{t, s, kind, source};
                if (!contains(key))
                    throw Error(ErrorKind::missing_key, "incomplete attention bank: missing " + describe(key));
            }
        }
    }
}

bool operator==(const AttentionBank& a, const AttentionBank& b) {
    if (!(a.meta_ == b.meta_) || a.entries_.size() != b.entries_.size()) return false;
    auto ib = b.entries_.begin();
    for (const auto& [key, tensor] : a.entries_) {
        if (!(key == ib->first) || tensor.size() != ib->second.size()) return false;
        for (std::size_t h = 0; h < tensor.size(); ++h) {
            const auto& x = tensor[h];
            const auto& y = ib->second[h];
            if (x.rows() != y.rows() || x.cols() != y.cols() || x != y) return false;
        }
        ++ib;
    }
    return true;
}

namespace {
constexpr std::uint8_t kBankVersion = 1;
}

std::vector<std::uint8_t> serialize(const AttentionBank& bank) {
    detail::ByteWriter w;
    w.tag("MSAB");
    w.u8(kBankVersion);
    const BankMeta& meta = bank.meta();
    w.u64(meta.schedule_hash);
    w.u32(static_cast<std::uint32_t>(meta.sites.size()));
    for (const auto& s : meta.sites) {
        w.i32(s.index);
        w.u8(static_cast<std::uint8_t>(s.stage));
    }
    w.u32(static_cast<std::uint32_t>(meta.source_hashes.size()));
    for (const auto& [source, hash] : meta.source_hashes) {
        w.u8(static_cast<std::uint8_t>(source));
        w.u32(static_cast<std::uint32_t>(hash.size()));
        w.raw(std::span(reinterpret_cast<const std::uint8_t*>(hash.data()), hash.size()));
    }
    w.u64(bank.size());
    for (const auto& [key, tensor] : bank.entries()) {
        const std::size_t length_at = w.size();
        w.u32(0);
        w.i32(key.timestep);
        w.i32(key.site);
        w.u8(static_cast<std::uint8_t>(key.kind));
        w.u8(static_cast<std::uint8_t>(key.source));
        w.u32(static_cast<std::uint32_t>(tensor.size()));
        for (const auto& m : tensor) {
            w.u32(static_cast<std::uint32_t>(m.rows()));
            w.u32(static_cast<std::uint32_t>(m.cols()));
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) w.f32(m(r, c));
        }
        w.patch_u32(length_at, static_cast<std::uint32_t>(w.size() - length_at - 4));
    }
    return std::move(w.bytes());
}

AttentionBank deserialize(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    if (!r.expect_tag("MSAB")) throw Error(ErrorKind::corrupt_header, "missing MSAB magic");
    if (r.u8() != kBankVersion) throw Error(ErrorKind::corrupt_header, "unsupported attention bank version");
    BankMeta meta;
    meta.schedule_hash = r.u64();
    const std::uint32_t site_count = r.u32();
    r.need(static_cast<std::size_t>(site_count) * 5);
    for (std::uint32_t i = 0; i < site_count; ++i) {
        AttentionSiteId s;
        s.index = r.i32();
        std::uint8_t stage = r.u8();
        if (stage > 2) throw Error(ErrorKind::corrupt_header, "invalid site stage");
        s.stage = static_cast<Stage>(stage);
        meta.sites.push_back(s);
    }
    const std::uint32_t hash_count = r.u32();
    for (std::uint32_t i = 0; i < hash_count; ++i) {
        std::uint8_t source = r.u8();
        if (source > 2) throw Error(ErrorKind::corrupt_header, "invalid bank source");
        std::uint32_t len = r.u32();
        r.need(len);
        std::string hash;
        for (std::uint32_t j = 0; j < len; ++j) hash.push_back(static_cast<char>(r.u8()));
        meta.source_hashes[static_cast<BankSource>(source)] = std::move(hash);
    }

    AttentionBank bank(std::move(meta));
    const std::uint64_t records = r.u64();
    for (std::uint64_t i = 0; i < records; ++i) {
        const std::uint32_t length = r.u32();
        r.need(length);
        const std::size_t start = r.position();
        BankKey key;
        key.timestep = r.i32();
        key.site = r.i32();
        std::uint8_t kind = r.u8(), source = r.u8();
        if (kind > 2 || source > 2) throw Error(ErrorKind::corrupt_header, "invalid record key");
        key.kind = static_cast<TensorKind>(kind);
        key.source = static_cast<BankSource>(source);
        const std::uint32_t heads = r.u32();
        StoredTensor tensor;
        for (std::uint32_t h = 0; h < heads; ++h) {
            std::uint32_t rows = r.u32(), cols = r.u32();
            r.need(static_cast<std::size_t>(rows) * cols * 4);
            Eigen::MatrixXf m(rows, cols);
            for (std::uint32_t y = 0; y < rows; ++y)
                for (std::uint32_t x = 0; x < cols; ++x) m(y, x) = r.f32();
            tensor.push_back(std::move(m));
        }
        if (r.position() - start != length) throw Error(ErrorKind::corrupt_header, "record length mismatch");
        bank.record(key, std::move(tensor));
    }
    if (r.remaining() != 0) throw Error(ErrorKind::corrupt_header, "trailing bytes after last record");
    return bank;
}

void save_cache(const AttentionBank& bank, const std::filesystem::path& path) {
    write_file(path, serialize(bank));
}

AttentionBank load_cache(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    try {
        return deserialize(bytes);
    } catch (...) {
        rethrow_with_context(path.string(), ErrorKind::corrupt_header);
    }
}

CaptureController::CaptureController(AttentionBank& bank, BankSource source, std::set<TensorKind> kinds,
                                     std::set<int> sites)
    : bank_(bank), source_(source), kinds_(std::move(kinds)), sites_(std::move(sites)) {}

std::optional<HeadMatrices> CaptureController::on_attention(const AttentionCall& call,
                                                            AttentionTensors& tensors) {
    if (!sites_.contains(call.site.index)) return std::nullopt;
    for (TensorKind kind : kinds_) {
        const HeadMatrices& src = kind == TensorKind::q ? tensors.q : kind == TensorKind::k ? tensors.k : tensors.v;
        bank_.record({call.timestep, call.site.index, kind, source_}, to_stored(src));
    }
    return std::nullopt;
}

}  // namespace mixsa
