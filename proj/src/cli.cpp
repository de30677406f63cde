// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/cli.hpp"

#include "mixsa/common.hpp"
#include "mixsa/config.hpp"
#include "mixsa/metrics.hpp"
#include "mixsa/pipeline.hpp"
#include "mixsa/service.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>

namespace mixsa::cli {

namespace {

// Parameter-shaped flags are collected as text and go through apply_params,
// so the CLI, config file and HTTP service share one parser.
struct JobFlags {
    std::map<std::string, std::string> text;
    std::vector<std::pair<CLI::Option*, std::string>> options;
    std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string>>> switches;
    std::string backend;
    std::string config;
    std::string out = "mixsa-out";

    void add(CLI::App* app, const std::string& key, const std::string& names, const std::string& help) {
        options.emplace_back(app->add_option(names, text[key], help), key);
    }
    void add_switch(CLI::App* app, const std::string& names, const std::string& key, const std::string& value,
                    const std::string& help) {
        switches.emplace_back(app->add_flag(names, help), std::make_pair(key, value));
    }

    std::map<std::string, std::string> given() const {
        std::map<std::string, std::string> out_params;
        for (const auto& [opt, key] : options)
            if (opt->count() > 0) out_params[key] = text.at(key);
        for (const auto& [opt, kv] : switches)
            if (opt->count() > 0) out_params[kv.first] = kv.second;
        return out_params;
    }
};

void add_job_flags(CLI::App* app, JobFlags& f, bool with_mix) {
    if (with_mix) {
        f.add(app, "zeta", "--zeta,--style-strength", "Style adherence weight in [0, 1] (default 0.4)");
        f.add(app, "beta", "--beta,--texture", "Texture retention weight in [0, 1] (default 0.5)");
    }
    f.add(app, "alpha", "--alpha,--sparse-threshold", "Strokes sparse threshold in (0, 1) (default 0.55)");
    f.add(app, "steps", "--steps", "DDIM sampling steps (default 50)");
    f.add(app, "guidance", "--guidance", "Classifier-free guidance scale (default 7.5)");
    f.add(app, "seed", "--seed", "Seed recorded with the job (default 0)");
    f.add(app, "method", "--method", "Contour detector: canny or a configured adapter (default teed)");
    f.add(app, "resolution", "--resolution", "Square working resolution (default 512)");
    f.add(app, "target_sites", "--target-sites", "Comma-separated self-attention sites to control (default 10,11)");
    f.add(app, "binarize_threshold", "--binarize-threshold", "Pixels above this become white (default 230)");
    f.add(app, "bilateral", "--bilateral", "off or spatial,range sigmas (default 2,20)");
    f.add(app, "contrast", "--contrast", "off or a stretch strength in [0, 1] (default off)");
    f.add(app, "foreground", "--foreground", "off or a foreground adapter name (default off)");
    f.add_switch(app, "--foreground-hard", "foreground_hard", "on", "Threshold the foreground mask at 0.5");
    f.add_switch(app, "--no-rcd", "rcd", "off", "Skip post-processing");
    f.add_switch(app, "--no-initial-contour", "initial_contour", "off",
                 "Start sampling from the color image's inverted latent");
    f.add_switch(app, "--no-msa", "msa", "off", "Disable attention control");
    f.add_switch(app, "--no-dct", "dct", "off", "Use the contour query alone instead of the color/contour blend");
    f.add_switch(app, "--strict", "strict", "on", "Fail instead of falling back when an adapter is missing");
    app->add_option("--backend", f.backend, "Backend id: mock, mock-echo, mock-zero, mock-linear");
    app->add_option("--config", f.config, "Config file (overrides $MIXSA_CONFIG)");
    app->add_option("--out", f.out, "Output root; results go to <out>/<descriptor hash>/")->capture_default_str();
}

struct Resolved {
    Config config;
    SketchJob job;
    std::string backend;
};

// Defaults, then the config file, then flags.
Resolved resolve(const JobFlags& f) {
    Resolved r;
    if (f.config.empty()) {
        r.config = Config::from_environment();
    } else {
        r.config = Config::load(f.config);
        if (const char* weights = std::getenv(kWeightsEnv); weights && *weights) r.config.set("weights", weights);
    }
    apply_params(r.config.values(), r.job, true);
    apply_params(f.given(), r.job);
    r.backend = !f.backend.empty() ? f.backend : r.config.get_or("backend", "mock");
    return r;
}

void print_resolved(std::ostream& out, const Resolved& r, const std::map<std::string, std::string>& extra = {}) {
    out << "resolved parameters:\n";
    out << "  backend = " << r.backend << "\n";
    if (auto w = r.config.get("weights")) out << "  weights = " << *w << "\n";
    for (const auto& [k, v] : echo_params(r.job)) out << "  " << k << " = " << v << "\n";
    for (const auto& [k, v] : extra) out << "  " << k << " = " << v << "\n";
}

std::shared_ptr<SketchPipeline> make_pipeline(const Resolved& r) {
    auto pipeline = std::make_shared<SketchPipeline>(make_backend(r.backend));
    register_adapters(r.config, *pipeline);
    return pipeline;
}

// Usage-class failures discovered while resolving parameters.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class Fn>
auto as_usage(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_argument) throw UsageError(e.what());
        throw;
    }
}

std::vector<std::filesystem::path> to_paths(const std::vector<std::string>& items) {
    return {items.begin(), items.end()};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sketch extraction from a color image and a reference sketch, steered by attention mixing."};
    app.name("mixsa");
    app.require_subcommand(1);
    app.footer(
        "Environment:\n"
        "  MIXSA_CONFIG   key = value config file (backend, weights, defaults, detector.<name>,\n"
        "                 foreground.<name> command adapters); flags override it\n"
        "  MIXSA_WEIGHTS  weight location recorded for external backends\n"
        "Exit codes: 0 success, 1 runtime error, 2 usage error.");

    // extract
    auto* extract = app.add_subcommand("extract", "Extract one sketch");
    JobFlags ex_flags;
    std::string color, reference;
    extract->add_option("--color", color, "Color image")->required();
    extract->add_option("--reference", reference, "Reference sketch")->required();
    add_job_flags(extract, ex_flags, true);

    // grid
    auto* grid = app.add_subcommand("grid", "Style interpolation grid over zeta x beta");
    JobFlags grid_flags;
    std::string grid_color, grid_reference, zeta_list, beta_list;
    grid->add_option("--color", grid_color, "Color image")->required();
    grid->add_option("--reference", grid_reference, "Reference sketch")->required();
    grid->add_option("--zeta,--style-strength", zeta_list, "Comma-separated zeta values")->required();
    grid->add_option("--beta,--texture", beta_list, "Comma-separated beta values")->required();
    add_job_flags(grid, grid_flags, false);

    // eval
    auto* eval = app.add_subcommand("eval", "Batch extraction with metrics");
    JobFlags eval_flags;
    std::string manifest, metrics = "psnr,ssim", extractor_name = "mock";
    std::vector<std::string> colors, references;
    eval->add_option("--manifest", manifest, "Lines of color,reference[,ground_truth]");
    eval->add_option("--colors", colors, "Color images, paired with every --references entry")->delimiter(',');
    eval->add_option("--references", references, "Reference sketches for the cross-product layout")->delimiter(',');
    eval->add_option("--metrics", metrics, "psnr,ssim,lpips,fid,kid")->capture_default_str();
    eval->add_option("--extractor", extractor_name, "Feature extractor: mock or none")->capture_default_str();
    add_job_flags(eval, eval_flags, true);

    // diagnose
    auto* diagnose = app.add_subcommand("diagnose", "Color-averaging diagnostics (mean drift, band errors)");
    std::string diag_image, diag_timesteps = "50,250,500,750,999", denoiser = "wiener";
    int drift_steps = 8, side = 64, cell = 2;
    std::optional<std::uint64_t> noise_seed;
    diagnose->add_option("--image", diag_image, "Image to analyse (default: white for drift, checkerboard for bands)");
    diagnose->add_option("--drift-steps", drift_steps, "Averaging steps")->capture_default_str();
    diagnose->add_option("--noise-seed", noise_seed, "Add seeded Gaussian noise to the averaging steps");
    diagnose->add_option("--timesteps", diag_timesteps, "Timesteps for the band table")->capture_default_str();
    diagnose->add_option("--denoiser", denoiser, "wiener or lowpass")->capture_default_str();
    diagnose->add_option("--side", side, "Working side length")->capture_default_str();
    diagnose->add_option("--cell", cell, "Checkerboard cell size")->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP service for the studio client");
    JobFlags serve_flags;
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    add_job_flags(serve, serve_flags, true);

    std::vector<const char*> argv{"mixsa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kExitUsage;
    }

    try {
        if (*extract) {
            Resolved r = as_usage([&] { return resolve(ex_flags); });
            r.job.color = read_image(color);
            r.job.reference = read_image(reference);
            print_resolved(out, r);
            auto pipeline = make_pipeline(r);
            const SketchResult result = pipeline->extract_sketch(r.job);
            const auto dir = write_result(result, ex_flags.out);
            out << "wrote " << (dir / "sketch.png").string() << "\n";
            return kExitOk;
        }
        if (*grid) {
            Resolved r = as_usage([&] { return resolve(grid_flags); });
            GridSpec spec;
            as_usage([&] {
                spec.zeta_values = parse_double_list("zeta", zeta_list);
                spec.beta_values = parse_double_list("beta", beta_list);
                return 0;
            });
            r.job.color = read_image(grid_color);
            r.job.reference = read_image(grid_reference);
            spec.base = r.job;
            as_usage([&] {
                validate(spec);
                return 0;
            });
            print_resolved(out, r, {{"zeta_values", zeta_list}, {"beta_values", beta_list}});
            auto pipeline = make_pipeline(r);
            const GridResult result = pipeline->interpolation_grid(spec);
            int failures = 0;
            for (const auto& c : result.cells) {
                out << "zeta=" << c.zeta << " beta=" << c.beta << " -> ";
                if (c.result) {
                    out << (write_result(*c.result, grid_flags.out) / "sketch.png").string() << "\n";
                } else {
                    out << "failed: " << c.error << "\n";
                    ++failures;
                }
            }
            out << "inversions: " << result.inversions << "\n";
            return failures ? kExitRuntime : kExitOk;
        }
        if (*eval) {
            Resolved r = as_usage([&] { return resolve(eval_flags); });
            const MetricSelection selection = as_usage([&] { return MetricSelection::parse(metrics); });
            if (manifest.empty() == (colors.empty() && references.empty()))
                throw UsageError("give either --manifest or both --colors and --references");
            if (manifest.empty() && (colors.empty() || references.empty()))
                throw UsageError("--colors and --references must both be given");
            std::unique_ptr<FeatureExtractor> extractor;
            if (extractor_name == "mock") extractor = std::make_unique<MockExtractor>();
            else if (extractor_name != "none") throw UsageError("unknown extractor '" + extractor_name + "'");

            const auto items = manifest.empty() ? cross_product_manifest(to_paths(colors), to_paths(references))
                                                : read_manifest(manifest);
            print_resolved(out, r, {{"metrics", selection.describe()}, {"extractor", extractor_name}});
            auto pipeline = make_pipeline(r);
            const BatchReport report = pipeline->batch_run(items, r.job, selection, extractor.get(), eval_flags.out);
            out << report.metrics.to_table();
            for (const auto& n : report.metrics.notices) out << "# " << n << "\n";
            std::filesystem::create_directories(eval_flags.out);
            const std::string json_text = report.metrics.to_json();
            const std::string table = report.metrics.to_table();
            write_file(std::filesystem::path(eval_flags.out) / "report.json",
                       std::span(reinterpret_cast<const std::uint8_t*>(json_text.data()), json_text.size()));
            write_file(std::filesystem::path(eval_flags.out) / "report.tsv",
                       std::span(reinterpret_cast<const std::uint8_t*>(table.data()), table.size()));
            return report.metrics.success_count == report.metrics.item_count ? kExitOk : kExitRuntime;
        }
        if (*diagnose) {
            std::vector<int> timesteps;
            as_usage([&] {
                for (double t : parse_double_list("timesteps", diag_timesteps)) timesteps.push_back(static_cast<int>(t));
                if (side < 8) throw Error(ErrorKind::invalid_argument, "--side must be at least 8");
                if (drift_steps < 0) throw Error(ErrorKind::invalid_argument, "--drift-steps must be non-negative");
                if (denoiser != "wiener" && denoiser != "lowpass")
                    throw Error(ErrorKind::invalid_argument, "--denoiser must be wiener or lowpass");
                return 0;
            });
            std::optional<ImageBuffer> image;
            if (!diag_image.empty()) image = prepare_square(read_image(diag_image), side);
            out << "resolved parameters:\n  drift_steps = " << drift_steps << "\n  noise_seed = "
                << (noise_seed ? std::to_string(*noise_seed) : "none") << "\n  timesteps = " << diag_timesteps
                << "\n  denoiser = " << denoiser << "\n  side = " << side << "\n";

            const ImageBuffer drift_start = image ? *image : ImageBuffer(side, side, 1, 255);
            const auto means = mean_drift_diagnostic(drift_start, drift_steps, noise_seed);
            out << "\nmean drift (x <- x/2 + eps/2)\nstep\tmean\tratio\n";
            for (std::size_t i = 0; i < means.size(); ++i) {
                out << i << '\t' << std::setprecision(9) << means[i] << '\t';
                if (i == 0 || means[i - 1] == 0.0) out << "-";
                else out << means[i] / means[i - 1];
                out << "\n";
            }

            const ImageBuffer band_img = image ? *image : checkerboard(side, cell);
            const NoiseSchedule schedule = make_schedule(1000, BetaSpec::stable_diffusion());
            const ToyDenoiser toy = denoiser == "lowpass" ? make_lowpass_denoiser() : ToyDenoiser{};
            out << "\nband reconstruction error (" << denoiser << ")\nt\talpha_bar\thigh\tlow\thigh>=low\n";
            for (int t : timesteps) {
                const BandErrors b = band_reconstruction_error(band_img, schedule, t, toy, noise_seed.value_or(0));
                out << t << '\t' << std::setprecision(6) << schedule.alpha_bars.at(static_cast<std::size_t>(t)) << '\t'
                    << b.high_band_error << '\t' << b.low_band_error << '\t'
                    << (b.high_band_error >= b.low_band_error ? "yes" : "no") << "\n";
            }
            return kExitOk;
        }
        if (*serve) {
            Resolved r = as_usage([&] { return resolve(serve_flags); });
            print_resolved(out, r, {{"host", host}, {"port", std::to_string(port)}});
            auto pipeline = make_pipeline(r);
            SketchService service(pipeline, r.job, serve_flags.out);
            out << "serving on http://" << host << ":" << port << std::endl;
            service.listen(host, port);
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error [internal]: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace mixsa::cli
