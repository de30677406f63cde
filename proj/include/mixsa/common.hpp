// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mixsa {

enum class ErrorKind {
    invalid_argument,
    dimension_mismatch,
    non_finite,
    duplicate_key,
    missing_key,
    corrupt_header,
    hash_mismatch,
    adapter,
    generation,
    io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Re-throws the in-flight exception with `context` prepended, keeping the kind
// of mixsa::Error and mapping anything else to `fallback`.
[[noreturn]] void rethrow_with_context(const std::string& context, ErrorKind fallback);

//
// Hashing
//

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

// First 8 bytes of the SHA-256 digest, little-endian.
std::uint64_t sha256_u64(std::span<const std::uint8_t> bytes);

std::string to_hex(std::uint64_t value);

//
// Logging
//

enum class LogLevel { debug, info, warning, error };

using LogSink = std::function<void(LogLevel, std::string_view)>;

// Replaces the process-wide sink; returns the previous one. The default writes
// warnings and errors to stderr.
LogSink set_log_sink(LogSink sink);

void log(LogLevel level, std::string_view message);
inline void log_warning(std::string_view message) { log(LogLevel::warning, message); }
inline void log_info(std::string_view message) { log(LogLevel::info, message); }

}  // namespace mixsa
