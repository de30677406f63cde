// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/config.hpp"

#include "mixsa/common.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace mixsa {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string on_off(bool v) { return v ? "on" : "off"; }

}  // namespace

bool parse_bool(const std::string& text) {
    const std::string t = trim(text);
    if (t == "1" || t == "true" || t == "on" || t == "yes") return true;
    if (t == "0" || t == "false" || t == "off" || t == "no") return false;
    throw Error(ErrorKind::invalid_argument, "expected a boolean (on/off), got '" + text + "'");
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw Error(ErrorKind::invalid_argument, key + ": expected a number, got '" + text + "'");
    return v;
}

long long parse_int(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw Error(ErrorKind::invalid_argument, key + ": expected an integer, got '" + text + "'");
    return v;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) throw Error(ErrorKind::invalid_argument, key + ": expected a comma-separated list");
    return out;
}

Config Config::parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || trim(t.substr(0, eq)).empty())
            throw Error(ErrorKind::invalid_argument, "config line " + std::to_string(line_no) + ": expected key = value");
        cfg.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    try {
        const auto bytes = read_file(path);
        return parse(std::string(bytes.begin(), bytes.end()));
    } catch (...) {
        rethrow_with_context("config " + path.string(), ErrorKind::io);
    }
}

Config Config::from_environment() {
    Config cfg;
    if (const char* path = std::getenv(kConfigEnv); path && *path) cfg = load(path);
    if (const char* weights = std::getenv(kWeightsEnv); weights && *weights) cfg.set("weights", weights);
    return cfg;
}

std::optional<std::string> Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

void apply_params(const std::map<std::string, std::string>& params, SketchJob& job, bool ignore_unknown) {
    for (const auto& [key, value] : params) {
        if (key == "zeta") job.mix.zeta = parse_double(key, value);
        else if (key == "beta") job.mix.beta = parse_double(key, value);
        else if (key == "alpha") job.contour.alpha = parse_double(key, value);
        else if (key == "method") job.contour.method = trim(value);
        else if (key == "invert_polarity") job.contour.invert_polarity = parse_bool(value);
        else if (key == "steps") job.steps = static_cast<int>(parse_int(key, value));
        else if (key == "guidance") job.guidance = parse_double(key, value);
        else if (key == "seed") job.seed = static_cast<std::uint64_t>(parse_int(key, value));
        else if (key == "resolution") job.resolution = static_cast<int>(parse_int(key, value));
        else if (key == "target_sites") {
            std::set<int> sites;
            for (double v : parse_double_list(key, value)) sites.insert(static_cast<int>(v));
            job.mix.target_sites = sites;
        } else if (key == "rcd") job.rcd.enabled = parse_bool(value);
        else if (key == "binarize_threshold") job.rcd.binarize_threshold = static_cast<int>(parse_int(key, value));
        else if (key == "bilateral") {
            if (trim(value) == "off") {
                job.rcd.bilateral.enabled = false;
            } else {
                const auto v = parse_double_list(key, value);
                if (v.size() != 2) throw Error(ErrorKind::invalid_argument, "bilateral: expected off or spatial,range");
                job.rcd.bilateral = {true, v[0], v[1]};
            }
        } else if (key == "contrast") {
            if (trim(value) == "off") {
                job.rcd.contrast.enabled = false;
            } else {
                job.rcd.contrast.enabled = true;
                job.rcd.contrast.strength = parse_double(key, value);
            }
        } else if (key == "foreground") {
            if (trim(value) == "off") {
                job.foreground.enabled = false;
            } else {
                job.foreground.enabled = true;
                job.foreground.adapter = trim(value);
            }
        } else if (key == "foreground_hard") job.foreground.hard = parse_bool(value);
        else if (key == "strict") job.strict = parse_bool(value);
        else if (key == "initial_contour") job.ablation.initial_contour = parse_bool(value);
        else if (key == "msa") job.ablation.msa = parse_bool(value);
        else if (key == "dct") job.ablation.dct = parse_bool(value);
        else if (!ignore_unknown) throw Error(ErrorKind::invalid_argument, "unknown parameter '" + key + "'");
    }
}

std::map<std::string, std::string> echo_params(const SketchJob& job) {
    std::string sites;
    for (int s : job.mix.target_sites) sites += (sites.empty() ? "" : ",") + std::to_string(s);
    const auto& r = job.rcd;
    return {
        {"zeta", shortest(job.mix.zeta)},
        {"beta", shortest(job.mix.beta)},
        {"alpha", shortest(job.contour.alpha)},
        {"method", job.contour.method},
        {"invert_polarity", on_off(job.contour.invert_polarity)},
        {"steps", std::to_string(job.steps)},
        {"guidance", shortest(job.guidance)},
        {"seed", std::to_string(job.seed)},
        {"resolution", std::to_string(job.resolution)},
        {"target_sites", sites},
        {"rcd", on_off(r.enabled)},
        {"binarize_threshold", std::to_string(r.binarize_threshold)},
        {"bilateral", r.bilateral.enabled
                          ? shortest(r.bilateral.spatial_sigma) + "," + shortest(r.bilateral.range_sigma)
                          : "off"},
        {"contrast", r.contrast.enabled ? shortest(r.contrast.strength) : "off"},
        {"foreground", job.foreground.enabled ? job.foreground.adapter : "off"},
        {"foreground_hard", on_off(job.foreground.hard)},
        {"strict", on_off(job.strict)},
        {"initial_contour", on_off(job.ablation.initial_contour)},
        {"msa", on_off(job.ablation.msa)},
        {"dct", on_off(job.ablation.dct)},
    };
}

void register_adapters(const Config& config, SketchPipeline& pipeline) {
    for (const auto& [key, value] : config.values()) {
        if (key.starts_with("detector.")) {
            pipeline.detectors().register_detector(key.substr(9), make_command_detector(value));
        } else if (key.starts_with("foreground.")) {
            pipeline.masks().register_adapter(key.substr(11), make_command_mask_adapter(value));
        }
    }
}

}  // namespace mixsa
