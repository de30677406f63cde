// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/pipeline.hpp"

#include "mixsa/common.hpp"
#include "mixsa/mock_backend.hpp"

#include <json.hpp>

#include <chrono>
#include <fstream>
#include <sstream>

namespace mixsa {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

json describe_job(const SketchJob& job, const std::string& backend_id) {
    json j;
    j["tool"] = "mixsa";
    j["version"] = kVersion;
    j["backend"] = backend_id;
    j["inputs"] = {{"color", content_hash(job.color)}, {"reference", content_hash(job.reference)}};
    j["mix"] = {{"zeta", job.mix.zeta},
                {"beta", job.mix.beta},
                {"target_sites", std::vector<int>(job.mix.target_sites.begin(), job.mix.target_sites.end())},
                {"scale_d", job.mix.scale_d},
                {"decompose_texture", job.mix.decompose_texture}};
    j["contour"] = {{"method", job.contour.method},
                    {"alpha", job.contour.alpha},
                    {"invert_polarity", job.contour.invert_polarity}};
    const auto& r = job.rcd;
    j["rcd"] = {{"enabled", r.enabled},
                {"binarize_threshold", r.binarize_threshold},
                {"white_value", r.white_value},
                {"bilateral",
                 {{"enabled", r.bilateral.enabled},
                  {"spatial_sigma", r.bilateral.spatial_sigma},
                  {"range_sigma", r.bilateral.range_sigma}}},
                {"contrast",
                 {{"enabled", r.contrast.enabled},
                  {"strength", r.contrast.strength},
                  {"low_percentile", r.contrast.low_percentile},
                  {"high_percentile", r.contrast.high_percentile}}}};
    j["foreground"] = {{"enabled", job.foreground.enabled},
                       {"adapter", job.foreground.adapter},
                       {"hard", job.foreground.hard}};
    j["ablation"] = {{"initial_contour", job.ablation.initial_contour},
                     {"msa", job.ablation.msa},
                     {"dct", job.ablation.dct},
                     {"rcd", job.ablation.rcd}};
    j["seed"] = job.seed;
    j["steps"] = job.steps;
    j["guidance"] = job.guidance;
    j["resolution"] = job.resolution;
    j["strict"] = job.strict;
    return j;
}

// Runs `fn`, prefixing any error with the stage name.
template <class Fn>
auto stage(const char* name, ErrorKind fallback, Fn&& fn) {
    try {
        return fn();
    } catch (...) {
        rethrow_with_context(name, fallback);
    }
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

void validate(const SketchJob& job) {
    validate(job.color);
    validate(job.reference);
    validate(job.contour);
    validate(job.rcd);
    if (std::isnan(job.mix.zeta) || std::isnan(job.mix.beta))
        throw Error(ErrorKind::invalid_argument, "zeta and beta must be numbers");
    if (job.mix.target_sites.empty()) throw Error(ErrorKind::invalid_argument, "no target sites given");
    if (job.steps < 1) throw Error(ErrorKind::invalid_argument, "steps must be at least 1");
    if (job.resolution < 8) throw Error(ErrorKind::invalid_argument, "resolution must be at least 8");
    if (!std::isfinite(job.guidance)) throw Error(ErrorKind::invalid_argument, "guidance must be finite");
}

void validate(const GridSpec& spec) {
    if (spec.zeta_values.empty() || spec.beta_values.empty())
        throw Error(ErrorKind::invalid_argument, "grid needs at least one zeta and one beta value");
    for (double v : spec.zeta_values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::invalid_argument, "grid zeta values must lie in [0, 1]");
    for (double v : spec.beta_values)
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::invalid_argument, "grid beta values must lie in [0, 1]");
    validate(spec.base);
}

SketchPipeline::SketchPipeline(std::shared_ptr<DenoiserBackend> backend) : backend_(std::move(backend)) {
    if (!backend_) throw Error(ErrorKind::invalid_argument, "pipeline needs a backend");
    noise_ = make_schedule(backend_->capabilities().native_steps, BetaSpec::stable_diffusion());
}

DdimSchedule SketchPipeline::schedule_for(const SketchJob& job) const { return DdimSchedule(noise_, job.steps); }

InversionSet SketchPipeline::prepare(const SketchJob& job) {
    validate(job);
    const auto& caps = backend_->capabilities();
    for (int site : job.mix.target_sites) {
        const bool known = std::any_of(caps.sites.begin(), caps.sites.end(),
                                       [&](const AttentionSiteId& s) { return s.index == site; });
        if (!known)
            throw Error(ErrorKind::invalid_argument,
                        "target site " + std::to_string(site) + " does not exist on backend " + caps.id);
    }

    const auto start = Clock::now();
    InversionSet out;
    ImageBuffer color = stage("preprocessing", ErrorKind::invalid_argument,
                              [&] { return prepare_square(job.color, job.resolution); });
    out.reference_prepared = stage("preprocessing", ErrorKind::invalid_argument,
                                   [&] { return to_rgb(prepare_square(job.reference, job.resolution)); });
    check_divisible(color, caps.downsample_factor);

    if (job.foreground.enabled) {
        if (masks_.has(job.foreground.adapter)) {
            const ForegroundMask mask = stage("foreground", ErrorKind::adapter, [&] {
                return extract_foreground_mask(color, masks_.get(job.foreground.adapter));
            });
            color = composite_on_white(color, mask, job.foreground.hard);
            out.foreground_adapter = job.foreground.adapter;
        } else if (job.strict) {
            throw Error(ErrorKind::adapter, "foreground adapter '" + job.foreground.adapter + "' is not available");
        } else {
            const std::string msg = "foreground adapter '" + job.foreground.adapter +
                                    "' is not available; continuing without a mask";
            log_warning(msg);
            out.fallbacks.push_back(msg);
        }
    }
    out.color_prepared = to_rgb(color);

    ContourParams contour = job.contour;
    if (!detectors_.has(contour.method)) {
        if (job.strict)
            throw Error(ErrorKind::adapter, "contour detector '" + contour.method + "' is not available");
        const std::string msg = "contour detector '" + contour.method + "' is not available; falling back to canny";
        log_warning(msg);
        out.fallbacks.push_back(msg);
        contour.method = "canny";
    }
    out.contour_method = contour.method;
    out.contour_map = stage("contour extraction", ErrorKind::adapter,
                            [&] { return extract_contours(out.color_prepared, contour, detectors_); });

    const DdimSchedule schedule = schedule_for(job);
    out.schedule_hash = schedule.hash();

    BankMeta meta;
    meta.schedule_hash = out.schedule_hash;
    for (const auto& s : caps.sites)
        if (job.mix.target_sites.contains(s.index)) meta.sites.push_back(s);
    meta.source_hashes[BankSource::reference] = content_hash(out.reference_prepared);
    meta.source_hashes[BankSource::color] = content_hash(out.color_prepared);
    meta.source_hashes[BankSource::contour] = content_hash(out.contour_map);
    out.bank = AttentionBank(std::move(meta));

    std::lock_guard lock(backend_mutex_);
    auto run_inversion = [&](const char* name, const ImageBuffer& img, BankSource source,
                             std::set<TensorKind> kinds) {
        return stage(name, ErrorKind::generation, [&] {
            CaptureController capture(out.bank, source, std::move(kinds), job.mix.target_sites);
            const LatentGrid z0 = backend_->encode_image(img);
            Trajectory traj = invert(z0, *backend_, schedule, &capture, job.guidance);
            ++inversions_;
            return traj.final_latent();
        });
    };
    run_inversion("reference inversion", out.reference_prepared, BankSource::reference,
                  {TensorKind::q, TensorKind::k, TensorKind::v});
    out.color_latent = run_inversion("color inversion", out.color_prepared, BankSource::color, {TensorKind::q});
    out.contour_latent =
        run_inversion("contour inversion", out.contour_map, BankSource::contour, {TensorKind::q});

    out.bank_hash = sha256_hex(serialize(out.bank));
    out.seconds = seconds_since(start);
    return out;
}

SketchResult SketchPipeline::generate(const SketchJob& job, const InversionSet& inv, const GenerateOptions& options) {
    validate(job);
    const auto start = Clock::now();
    const DdimSchedule schedule = schedule_for(job);
    if (inv.schedule_hash != schedule.hash())
        throw Error(ErrorKind::hash_mismatch, "inversions were computed under schedule " + to_hex(inv.schedule_hash) +
                                                  " but the job uses " + to_hex(schedule.hash()));

    MixParams mix = job.mix.clamped();
    if (!job.ablation.dct) mix.decompose_texture = false;

    ImageBuffer decoded;
    {
        std::lock_guard lock(backend_mutex_);
        const LatentGrid& zT = job.ablation.initial_contour ? inv.contour_latent : inv.color_latent;
        std::optional<MixController> controller;
        if (job.ablation.msa) {
            controller.emplace(stage("bank validation", ErrorKind::missing_key, [&] {
                return make_controller(inv.bank, mix, schedule.hash(), schedule.timesteps);
            }));
            controller->set_debug_dump(options.dump);
        }
        const LatentGrid z0 = stage("generation", ErrorKind::generation, [&] {
            return sample(zT, *backend_, schedule, controller ? &*controller : nullptr, job.guidance);
        });
        decoded = stage("decoding", ErrorKind::generation, [&] { return backend_->decode_latent(z0); });
    }

    RcdParams rcd = job.rcd;
    rcd.enabled = rcd.enabled && job.ablation.rcd;
    ImageBuffer sketch = stage("post-processing", ErrorKind::generation, [&] { return apply_rcd(decoded, rcd); });

    SketchResult result;
    result.sketch = std::move(sketch);
    result.bank_hash = inv.bank_hash;
    if (job.keep_intermediates) {
        result.contour_map = inv.contour_map;
        result.pre_rcd = to_gray(decoded);
    }

    const json descriptor = describe_job(job, backend_->capabilities().id);
    result.descriptor_json = descriptor.dump(2) + "\n";

    json prov = descriptor;
    prov["resolved"] = {{"zeta", mix.zeta},
                        {"beta", mix.beta},
                        {"decompose_texture", mix.decompose_texture},
                        {"contour_method", inv.contour_method},
                        {"foreground_adapter", inv.foreground_adapter},
                        {"rcd_enabled", rcd.enabled}};
    prov["schedule"] = {{"hash", to_hex(schedule.hash())},
                        {"native_steps", schedule.noise.num_steps},
                        {"timesteps", schedule.timesteps}};
    prov["bank_hash"] = inv.bank_hash;
    json sources = json::object();
    for (const auto& [src, hash] : inv.bank.meta().source_hashes) sources[std::string(to_string(src))] = hash;
    prov["source_hashes"] = sources;
    prov["fallbacks"] = inv.fallbacks;
    prov["output"] = {{"hash", content_hash(result.sketch)},
                      {"width", result.sketch.width},
                      {"height", result.sketch.height},
                      {"white_fraction", white_fraction(result.sketch)}};
    prov["timings"] = {{"inversion_s", inv.seconds}, {"generation_s", seconds_since(start)}};
    result.provenance_json = prov.dump(2) + "\n";
    return result;
}

SketchResult SketchPipeline::extract_sketch(const SketchJob& job) {
    const InversionSet inv = prepare(job);
    return generate(job, inv);
}

GridResult SketchPipeline::interpolation_grid(const GridSpec& spec) {
    validate(spec);
    const int before = inversions_;
    const InversionSet inv = prepare(spec.base);

    GridResult grid;
    grid.zeta_values = spec.zeta_values;
    grid.beta_values = spec.beta_values;
    for (double zeta : spec.zeta_values) {
        for (double beta : spec.beta_values) {
            GridCell cell{zeta, beta, std::nullopt, {}};
            SketchJob job = spec.base;
            job.mix.zeta = zeta;
            job.mix.beta = beta;
            try {
                cell.result = generate(job, inv);
            } catch (const std::exception& e) {
                cell.error = e.what();
                log_warning("grid cell (zeta=" + std::to_string(zeta) + ", beta=" + std::to_string(beta) +
                            ") failed: " + e.what());
            }
            grid.cells.push_back(std::move(cell));
        }
    }
    grid.inversions = inversions_ - before;
    return grid;
}

BatchReport SketchPipeline::batch_run(const std::vector<ManifestItem>& manifest, const SketchJob& job_template,
                                      const MetricSelection& metrics, const FeatureExtractor* extractor,
                                      const std::filesystem::path& out_root) {
    BatchReport report;
    std::vector<EvalItem> evals;
    for (const auto& item : manifest) {
        BatchItemResult row{item.id, false, {}, std::nullopt};
        EvalItem eval{item.id, std::nullopt, std::nullopt, {}};
        try {
            SketchJob job = job_template;
            job.color = read_image(item.color);
            job.reference = read_image(item.reference);
            if (item.ground_truth) eval.ground_truth = read_image(*item.ground_truth);
            SketchResult result = extract_sketch(job);
            if (!out_root.empty()) row.output_dir = write_result(result, out_root);
            eval.output = std::move(result.sketch);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
            eval.error = e.what();
            log_warning("batch item '" + item.id + "' failed: " + e.what());
        }
        report.items.push_back(std::move(row));
        evals.push_back(std::move(eval));
    }
    std::ostringstream pre;
    pre << "center-crop " << job_template.resolution << "x" << job_template.resolution
        << "; gray; output resized to ground truth";
    report.metrics = evaluate(evals, metrics, extractor, pre.str());
    return report;
}

std::vector<ManifestItem> parse_manifest(const std::string& text, const std::filesystem::path& base_dir) {
    std::vector<ManifestItem> items;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(trim(field));
        if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty())
            throw Error(ErrorKind::invalid_argument,
                        "manifest line " + std::to_string(line_no) + ": expected color,reference[,ground_truth]");
        ManifestItem item;
        item.color = resolve(fields[0]);
        item.reference = resolve(fields[1]);
        if (fields.size() == 3 && !fields[2].empty()) item.ground_truth = resolve(fields[2]);
        item.id = item.color.stem().string() + "+" + item.reference.stem().string();
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<ManifestItem> read_manifest(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

std::vector<ManifestItem> cross_product_manifest(const std::vector<std::filesystem::path>& colors,
                                                 const std::vector<std::filesystem::path>& references) {
    std::vector<ManifestItem> items;
    items.reserve(colors.size() * references.size());
    for (std::size_t i = 0; i < colors.size(); ++i)
        for (std::size_t j = 0; j < references.size(); ++j)
            items.push_back({"c" + std::to_string(i) + "-r" + std::to_string(j), colors[i], references[j], std::nullopt});
    return items;
}

std::shared_ptr<DenoiserBackend> make_backend(const std::string& id) {
    if (id.starts_with("mock")) return std::make_shared<MockBackend>(mock_config_for(id));
    throw Error(ErrorKind::adapter,
                "backend '" + id + "' is not built in; real models are attached through the Python bindings");
}

std::string descriptor_hash(const SketchResult& result) { return sha256_hex(result.descriptor_json); }

std::filesystem::path write_result(const SketchResult& result, const std::filesystem::path& out_root) {
    const auto dir = out_root / descriptor_hash(result);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    auto write_text = [&](const char* name, const std::string& text) {
        write_file(dir / name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    };
    write_text("descriptor.json", result.descriptor_json);
    write_text("provenance.json", result.provenance_json);
    write_png(result.sketch, dir / "sketch.png");
    if (result.contour_map) write_png(*result.contour_map, dir / "contour.png");
    if (result.pre_rcd) write_png(*result.pre_rcd, dir / "pre_rcd.png");
    return dir;
}

}  // namespace mixsa
