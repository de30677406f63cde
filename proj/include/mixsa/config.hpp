// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/pipeline.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace mixsa {

// Environment variables consulted by the CLI and service.
inline constexpr const char* kConfigEnv = "MIXSA_CONFIG";
inline constexpr const char* kWeightsEnv = "MIXSA_WEIGHTS";

// Plain-text "key = value" document. '#' starts a comment line; later keys
// override earlier ones.
//
//   backend = mock
//   weights = /models/sd-v1-4
//   zeta = 0.4
//   detector.teed = python3 teed.py --in {input} --out {output} --alpha {alpha}
//   foreground.u2net = u2net-cli {input} {output}
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::filesystem::path& path);
    // File named by MIXSA_CONFIG (if set) with MIXSA_WEIGHTS applied on top.
    static Config from_environment();

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    // Keys of `other` win.
    void merge(const Config& other);

private:
    std::map<std::string, std::string> values_;
};

// Job parameters as a flat key-value document, shared by the config file, the
// HTTP service and the CLI. Keys: zeta, beta, alpha, method, steps, guidance,
// seed, resolution, target_sites, rcd, binarize_threshold, bilateral,
// contrast, foreground, foreground_hard, strict, initial_contour, msa, dct,
// invert_polarity. Unknown keys are rejected unless `ignore_unknown`.
void apply_params(const std::map<std::string, std::string>& params, SketchJob& job, bool ignore_unknown = false);

// Inverse of apply_params for the parameter echo.
std::map<std::string, std::string> echo_params(const SketchJob& job);

// Registers detector.<name> and foreground.<name> command adapters.
void register_adapters(const Config& config, SketchPipeline& pipeline);

bool parse_bool(const std::string& text);
double parse_double(const std::string& key, const std::string& text);
long long parse_int(const std::string& key, const std::string& text);
std::vector<double> parse_double_list(const std::string& key, const std::string& text);

}  // namespace mixsa
