// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/common.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <iostream>
#include <mutex>

namespace mixsa {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::dimension_mismatch: return "dimension-mismatch";
        case ErrorKind::non_finite: return "non-finite";
        case ErrorKind::duplicate_key: return "duplicate-key";
        case ErrorKind::missing_key: return "missing-key";
        case ErrorKind::corrupt_header: return "corrupt-header";
        case ErrorKind::hash_mismatch: return "hash-mismatch";
        case ErrorKind::adapter: return "adapter";
        case ErrorKind::generation: return "generation";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void rethrow_with_context(const std::string& context, ErrorKind fallback) {
    try {
        throw;
    } catch (const Error& e) {
        throw Error(e.kind(), context + ": " + e.what());
    } catch (const std::exception& e) {
        throw Error(fallback, context + ": " + e.what());
    }
}

namespace {

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> bytes) {
    std::array<std::uint8_t, 32> digest{};
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr ||
        EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error(ErrorKind::io, "sha256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    return digest;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    auto digest = sha256(bytes);
    std::string out;
    out.reserve(64);
    for (auto b : digest) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xF]);
    }
    return out;
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::uint64_t sha256_u64(std::span<const std::uint8_t> bytes) {
    auto digest = sha256(bytes);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | digest[i];
    return v;
}

std::string to_hex(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink_slot() {
    static LogSink sink = [](LogLevel level, std::string_view msg) {
        if (level == LogLevel::warning) std::cerr << "[mixsa] warning: " << msg << '\n';
        else if (level == LogLevel::error) std::cerr << "[mixsa] error: " << msg << '\n';
    };
    return sink;
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
    std::lock_guard lock(sink_mutex());
    auto previous = std::move(sink_slot());
    sink_slot() = std::move(sink);
    return previous;
}

void log(LogLevel level, std::string_view message) {
    std::lock_guard lock(sink_mutex());
    if (sink_slot()) sink_slot()(level, message);
}

}  // namespace mixsa
