// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/backend.hpp"

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mixsa {

enum class TensorKind : std::uint8_t { q = 0, k = 1, v = 2 };
enum class BankSource : std::uint8_t { reference = 0, color = 1, contour = 2 };

std::string_view to_string(TensorKind kind);
std::string_view to_string(BankSource source);

struct BankKey {
    int timestep = 0;
    int site = 0;
    TensorKind kind = TensorKind::q;
    BankSource source = BankSource::reference;

    friend auto operator<=>(const BankKey&, const BankKey&) = default;
};

std::string describe(const BankKey& key);

// Post-projection tensors, one tokens x head_dim matrix per head, kept in
// float32 so caches are byte-reproducible.
using StoredTensor = std::vector<Eigen::MatrixXf>;

StoredTensor to_stored(const HeadMatrices& heads);
HeadMatrices to_heads(const StoredTensor& stored);

struct BankMeta {
    std::uint64_t schedule_hash = 0;
    std::vector<AttentionSiteId> sites;
    std::map<BankSource, std::string> source_hashes;

    friend bool operator==(const BankMeta&, const BankMeta&) = default;
};

class AttentionBank {
public:
    AttentionBank() = default;
    explicit AttentionBank(BankMeta meta) : meta_(std::move(meta)) {}

    void record(const BankKey& key, StoredTensor tensor);
    const StoredTensor& lookup(const BankKey& key) const;
    bool contains(const BankKey& key) const { return entries_.contains(key); }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t count(BankSource source, TensorKind kind) const;
    const std::map<BankKey, StoredTensor>& entries() const noexcept { return entries_; }

    BankMeta& meta() noexcept { return meta_; }
    const BankMeta& meta() const noexcept { return meta_; }

    // hash_mismatch unless the bank was produced under `schedule_hash`.
    void require_schedule(std::uint64_t schedule_hash) const;

    // missing_key naming the first absent (source, kind) entry at any of the
    // timesteps/sites. The default set is what generation reads: reference
    // Q, K, V plus color and contour Q.
    void validate_complete(std::span<const int> timesteps, std::span<const int> sites,
                           std::span<const std::pair<BankSource, TensorKind>> required) const;
    void validate_complete(std::span<const int> timesteps, std::span<const int> sites) const;

    friend bool operator==(const AttentionBank&, const AttentionBank&);

private:
    BankMeta meta_;
    std::map<BankKey, StoredTensor> entries_;
};

// Cache layout (little-endian):
//   "MSAB" | version u8 | schedule hash u64 | site count u32 | (index i32, stage u8)*
//   | source-hash count u32 | (source u8, len u32, bytes)* | record count u64
//   | records: byte length u32 | timestep i32 | site i32 | kind u8 | source u8
//             | heads u32 | (rows u32, cols u32, row-major f32 data)*
std::vector<std::uint8_t> serialize(const AttentionBank& bank);
AttentionBank deserialize(std::span<const std::uint8_t> bytes);

void save_cache(const AttentionBank& bank, const std::filesystem::path& path);
AttentionBank load_cache(const std::filesystem::path& path);

// Records Q/K/V of selected sites into a bank while inversion runs; leaves the
// attention computation itself untouched.
class CaptureController final : public AttentionController {
public:
    CaptureController(AttentionBank& bank, BankSource source, std::set<TensorKind> kinds,
                      std::set<int> sites);

    std::optional<HeadMatrices> on_attention(const AttentionCall& call, AttentionTensors& tensors) override;

private:
    AttentionBank& bank_;
    BankSource source_;
    std::set<TensorKind> kinds_;
    std::set<int> sites_;
};

}  // namespace mixsa
