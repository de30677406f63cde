// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/attnbank.hpp"
#include "mixsa/backend.hpp"
#include "mixsa/contour.hpp"
#include "mixsa/ddim.hpp"
#include "mixsa/metrics.hpp"
#include "mixsa/mixer.hpp"
#include "mixsa/rcd.hpp"
#include "mixsa/scene.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mixsa {

inline constexpr const char* kVersion = "0.1.0";

struct ForegroundOption {
    bool enabled = false;
    std::string adapter = "alpha";
    bool hard = false;
};

// Each flag disables one stage of the method independently.
struct AblationFlags {
    bool initial_contour = true;  // off: sample from the color image's inverted latent
    bool msa = true;              // off: no attention control during generation
    bool dct = true;              // off: the contour query replaces the color/contour blend
    bool rcd = true;              // off: skip post-processing

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct SketchJob {
    ImageBuffer color;
    ImageBuffer reference;
    MixParams mix;
    ContourParams contour;
    RcdParams rcd;
    ForegroundOption foreground;
    AblationFlags ablation;
    std::uint64_t seed = 0;
    int steps = kDefaultSamplingSteps;
    double guidance = 7.5;
    // Both images are center-cropped and scaled to resolution x resolution.
    int resolution = 512;
    // Missing optional adapters are errors instead of falling back.
    bool strict = false;
    bool keep_intermediates = true;
};

void validate(const SketchJob& job);

// Everything generation needs that does not depend on zeta/beta: the three
// inversions and their captured tensors.
struct InversionSet {
    AttentionBank bank;
    LatentGrid contour_latent;  // z^s_T
    LatentGrid color_latent;    // z^c_T
    ImageBuffer color_prepared;
    ImageBuffer reference_prepared;
    ImageBuffer contour_map;
    std::uint64_t schedule_hash = 0;
    std::string bank_hash;
    std::string contour_method;  // detector actually used
    std::string foreground_adapter;  // empty when no mask was applied
    std::vector<std::string> fallbacks;
    double seconds = 0.0;
};

struct SketchResult {
    ImageBuffer sketch;
    std::optional<ImageBuffer> contour_map;
    std::optional<ImageBuffer> pre_rcd;
    // Inputs that determine the output; its SHA-256 names the output directory.
    std::string descriptor_json;
    // Descriptor plus timings, hashes and notices.
    std::string provenance_json;
    std::string bank_hash;
};

struct GenerateOptions {
    AttentionDump* dump = nullptr;
};

struct GridSpec {
    SketchJob base;
    std::vector<double> zeta_values;
    std::vector<double> beta_values;
};

void validate(const GridSpec& spec);

struct GridCell {
    double zeta = 0.0;
    double beta = 0.0;
    std::optional<SketchResult> result;
    std::string error;
};

struct GridResult {
    std::vector<double> zeta_values;
    std::vector<double> beta_values;
    // Row-major: cells[i * beta_values.size() + j] is (zeta_i, beta_j).
    std::vector<GridCell> cells;
    int inversions = 0;

    const GridCell& cell(std::size_t i, std::size_t j) const { return cells.at(i * beta_values.size() + j); }
};

struct ManifestItem {
    std::string id;
    std::filesystem::path color;
    std::filesystem::path reference;
    std::optional<std::filesystem::path> ground_truth;
};

// One item per non-empty, non-comment line: "color,reference[,ground_truth]".
// Relative paths resolve against `base_dir`.
std::vector<ManifestItem> parse_manifest(const std::string& text, const std::filesystem::path& base_dir = {});
std::vector<ManifestItem> read_manifest(const std::filesystem::path& path);

// Every color paired with every reference, color-major; ids are "c<i>-r<j>".
std::vector<ManifestItem> cross_product_manifest(const std::vector<std::filesystem::path>& colors,
                                                 const std::vector<std::filesystem::path>& references);

struct BatchItemResult {
    std::string id;
    bool ok = false;
    std::string error;
    std::optional<std::filesystem::path> output_dir;
};

struct BatchReport {
    std::vector<BatchItemResult> items;
    MetricReport metrics;
};

class SketchPipeline {
public:
    explicit SketchPipeline(std::shared_ptr<DenoiserBackend> backend);

    DetectorRegistry& detectors() noexcept { return detectors_; }
    MaskRegistry& masks() noexcept { return masks_; }
    DenoiserBackend& backend() noexcept { return *backend_; }

    DdimSchedule schedule_for(const SketchJob& job) const;

    // Foreground composite, contour extraction and the three inversions.
    InversionSet prepare(const SketchJob& job);
    // Sampling with the mixer controller, decoding and post-processing.
    SketchResult generate(const SketchJob& job, const InversionSet& inversions, const GenerateOptions& options = {});
    SketchResult extract_sketch(const SketchJob& job);

    // Inverts once and generates every (zeta, beta) cell from the shared bank.
    GridResult interpolation_grid(const GridSpec& spec);

    // Per-item isolation: failures are recorded and the batch continues.
    // Results are written under `out_root` when it is non-empty.
    BatchReport batch_run(const std::vector<ManifestItem>& manifest, const SketchJob& job_template,
                          const MetricSelection& metrics, const FeatureExtractor* extractor,
                          const std::filesystem::path& out_root = {});

    int inversion_count() const noexcept { return inversions_; }

private:
    std::shared_ptr<DenoiserBackend> backend_;
    DetectorRegistry detectors_;
    MaskRegistry masks_;
    NoiseSchedule noise_;
    // Held for the whole inversion and generation span of a job.
    std::mutex backend_mutex_;
    int inversions_ = 0;
};

// Backends reachable by id without external weights: the mock family.
std::shared_ptr<DenoiserBackend> make_backend(const std::string& id);

// SHA-256 of the descriptor text; names the output directory.
std::string descriptor_hash(const SketchResult& result);

// Writes descriptor.json, provenance.json, sketch.png and any intermediates
// to out_root/<descriptor hash>/ and returns that directory.
std::filesystem::path write_result(const SketchResult& result, const std::filesystem::path& out_root);

}  // namespace mixsa
