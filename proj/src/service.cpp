// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/service.hpp"

#include "mixsa/common.hpp"
#include "mixsa/config.hpp"

#include <httplib.h>
#include <json.hpp>

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <functional>
#include <thread>

namespace mixsa {

using nlohmann::json;

namespace {

struct JobRecord {
    std::string status = "queued";  // queued, running, done, failed
    std::map<std::string, std::string> params;
    std::string error;
    std::vector<std::uint8_t> png;
    std::string provenance;
    std::string output_dir;
};

struct CellRecord {
    double zeta = 0.0;
    double beta = 0.0;
    std::string status = "queued";
    std::string error;
    std::vector<std::uint8_t> png;
};

struct GridRecord {
    std::string status = "queued";
    std::map<std::string, std::string> params;
    std::vector<double> zeta_values;
    std::vector<double> beta_values;
    std::vector<CellRecord> cells;
    std::string error;
    int inversions = 0;
};

struct ParsedRequest {
    SketchJob job;
    std::vector<double> zeta_values;
    std::vector<double> beta_values;
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

int status_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::invalid_argument:
        case ErrorKind::dimension_mismatch:
        case ErrorKind::corrupt_header:
        case ErrorKind::non_finite:
            return 400;
        default:
            return 422;
    }
}

json cells_json(const GridRecord& g, const std::string& id) {
    json cells = json::array();
    for (std::size_t i = 0; i < g.zeta_values.size(); ++i)
        for (std::size_t j = 0; j < g.beta_values.size(); ++j) {
            const auto& c = g.cells[i * g.beta_values.size() + j];
            json cell{{"i", i}, {"j", j}, {"zeta", c.zeta}, {"beta", c.beta}, {"status", c.status}};
            if (!c.error.empty()) cell["error"] = c.error;
            if (c.status == "done")
                cell["url"] = "/api/grids/" + id + "/cell/" + std::to_string(i) + "/" + std::to_string(j) + ".png";
            cells.push_back(std::move(cell));
        }
    return cells;
}

}  // namespace

struct SketchService::Impl {
    std::shared_ptr<SketchPipeline> pipeline;
    SketchJob defaults;
    std::filesystem::path out_root;

    httplib::Server server;
    std::thread server_thread;

    std::mutex mutex;
    std::condition_variable work_cv;
    std::condition_variable idle_cv;
    std::deque<std::function<void()>> queue;
    bool busy = false;
    bool stopping = false;
    std::thread worker;

    std::map<std::string, JobRecord> jobs;
    std::map<std::string, GridRecord> grids;
    std::uint64_t next_id = 1;

    Impl(std::shared_ptr<SketchPipeline> p, SketchJob d, std::filesystem::path out)
        : pipeline(std::move(p)), defaults(std::move(d)), out_root(std::move(out)) {
        worker = std::thread([this] { work(); });
        install_routes();
    }

    void work() {
        for (;;) {
            std::function<void()> task;
            {
                std::unique_lock lock(mutex);
                work_cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (queue.empty()) return;
                task = std::move(queue.front());
                queue.pop_front();
                busy = true;
            }
            task();
            {
                std::lock_guard lock(mutex);
                busy = false;
            }
            idle_cv.notify_all();
        }
    }

    void enqueue(std::function<void()> task) {
        {
            std::lock_guard lock(mutex);
            queue.push_back(std::move(task));
        }
        work_cv.notify_one();
    }

    std::string new_id(const char* prefix) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%06llu", prefix, static_cast<unsigned long long>(next_id++));
        return buf;
    }

    ParsedRequest parse_request(const httplib::Request& req, bool grid) {
        ParsedRequest out{defaults, {}, {}};
        std::map<std::string, std::string> params;
        for (const auto& [key, value] : req.params) params[key] = value;
        bool has_color = false, has_reference = false;
        for (const auto& [name, part] : req.files) {
            if (name == "color" || name == "reference") {
                auto bytes = std::span(reinterpret_cast<const std::uint8_t*>(part.content.data()), part.content.size());
                ImageBuffer img = stage_decode(name, bytes);
                (name == "color" ? out.job.color : out.job.reference) = std::move(img);
                (name == "color" ? has_color : has_reference) = true;
            } else if (name == "params") {
                for (const auto& [k, v] : Config::parse(part.content).values()) params[k] = v;
            } else {
                params[name] = part.content;
            }
        }
        if (!has_color || !has_reference)
            throw Error(ErrorKind::invalid_argument, "both 'color' and 'reference' images are required");
        if (grid) {
            auto take = [&](const char* key) {
                auto it = params.find(key);
                if (it == params.end()) throw Error(ErrorKind::invalid_argument, std::string("grid needs '") + key + "'");
                auto values = parse_double_list(key, it->second);
                params.erase(it);
                return values;
            };
            out.zeta_values = take("zeta");
            out.beta_values = take("beta");
        }
        apply_params(params, out.job);
        validate(out.job);
        return out;
    }

    static ImageBuffer stage_decode(const std::string& name, std::span<const std::uint8_t> bytes) {
        try {
            return decode_image(bytes);
        } catch (...) {
            rethrow_with_context("image '" + name + "'", ErrorKind::invalid_argument);
        }
    }

    void run_job(const std::string& id, SketchJob job) {
        {
            std::lock_guard lock(mutex);
            jobs[id].status = "running";
        }
        JobRecord done;
        try {
            SketchResult result = pipeline->extract_sketch(job);
            done.png = encode_png(result.sketch);
            done.provenance = result.provenance_json;
            if (!out_root.empty()) done.output_dir = write_result(result, out_root).string();
            done.status = "done";
        } catch (const std::exception& e) {
            done.status = "failed";
            done.error = e.what();
            log_warning("job " + id + " failed: " + e.what());
        }
        std::lock_guard lock(mutex);
        auto& rec = jobs[id];
        rec.status = done.status;
        rec.error = done.error;
        rec.png = std::move(done.png);
        rec.provenance = std::move(done.provenance);
        rec.output_dir = done.output_dir;
    }

    void run_grid(const std::string& id, GridSpec spec) {
        auto set_status = [&](const std::string& s) {
            std::lock_guard lock(mutex);
            grids[id].status = s;
        };
        set_status("running");
        std::optional<InversionSet> inv;
        const int before = pipeline->inversion_count();
        try {
            inv = pipeline->prepare(spec.base);
        } catch (const std::exception& e) {
            std::lock_guard lock(mutex);
            auto& g = grids[id];
            g.status = "failed";
            g.error = e.what();
            for (auto& c : g.cells) {
                c.status = "failed";
                c.error = e.what();
            }
            return;
        }
        std::size_t k = 0;
        for (double zeta : spec.zeta_values) {
            for (double beta : spec.beta_values) {
                SketchJob job = spec.base;
                job.mix.zeta = zeta;
                job.mix.beta = beta;
                CellRecord cell{zeta, beta, "done", {}, {}};
                try {
                    cell.png = encode_png(pipeline->generate(job, *inv).sketch);
                } catch (const std::exception& e) {
                    cell.status = "failed";
                    cell.error = e.what();
                }
                std::lock_guard lock(mutex);
                grids[id].cells[k++] = std::move(cell);
            }
        }
        std::lock_guard lock(mutex);
        grids[id].inversions = pipeline->inversion_count() - before;
        grids[id].status = "done";
    }

    json job_json(const std::string& id, const JobRecord& rec) {
        json j{{"id", id}, {"status", rec.status}, {"params", rec.params}};
        if (!rec.error.empty()) j["error"] = rec.error;
        if (rec.status == "done") {
            j["result_url"] = "/api/jobs/" + id + "/result.png";
            j["provenance"] = json::parse(rec.provenance);
            if (!rec.output_dir.empty()) j["output_dir"] = rec.output_dir;
        }
        return j;
    }

    json capabilities_json() {
        const auto& caps = pipeline->backend().capabilities();
        json sites = json::array();
        for (const auto& s : caps.sites) sites.push_back({{"index", s.index}, {"stage", std::string(to_string(s.stage))}});
        return {{"version", kVersion},
                {"backend",
                 {{"id", caps.id},
                  {"downsample_factor", caps.downsample_factor},
                  {"latent_channels", caps.latent_channels},
                  {"native_steps", caps.native_steps},
                  {"supports_guidance", caps.supports_guidance},
                  {"self_attention_sites", sites}}},
                {"detectors", pipeline->detectors().names()},
                {"foreground_adapters", pipeline->masks().names()},
                {"defaults", echo_params(defaults)}};
    }

    void install_routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server.set_payload_max_length(64ull << 20);

        server.Get("/api/capabilities", [this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, capabilities_json());
        });

        server.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
            ParsedRequest parsed;
            try {
                parsed = parse_request(req, false);
            } catch (const Error& e) {
                return send_error(res, status_for(e), e.what());
            }
            std::string id;
            json body;
            {
                std::lock_guard lock(mutex);
                id = new_id("job-");
                auto& rec = jobs[id];
                rec.params = echo_params(parsed.job);
                body = job_json(id, rec);
            }
            enqueue([this, id, job = std::move(parsed.job)]() mutable { run_job(id, std::move(job)); });
            send_json(res, 202, body);
        });

        server.Get(R"(/api/jobs/([A-Za-z0-9-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto it = jobs.find(req.matches[1]);
            if (it == jobs.end()) return send_error(res, 404, "unknown job");
            send_json(res, 200, job_json(it->first, it->second));
        });

        server.Get(R"(/api/jobs/([A-Za-z0-9-]+)/result\.png)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       std::lock_guard lock(mutex);
                       auto it = jobs.find(req.matches[1]);
                       if (it == jobs.end()) return send_error(res, 404, "unknown job");
                       if (it->second.status != "done")
                           return send_json(res, 409, {{"error", "job is " + it->second.status},
                                                       {"status", it->second.status},
                                                       {"params", it->second.params}});
                       const auto& png = it->second.png;
                       res.set_content(std::string(png.begin(), png.end()), "image/png");
                   });

        server.Post("/api/grids", [this](const httplib::Request& req, httplib::Response& res) {
            ParsedRequest parsed;
            GridSpec spec;
            try {
                parsed = parse_request(req, true);
                spec = {parsed.job, parsed.zeta_values, parsed.beta_values};
                validate(spec);
            } catch (const Error& e) {
                return send_error(res, status_for(e), e.what());
            }
            std::string id;
            json body;
            {
                std::lock_guard lock(mutex);
                id = new_id("grid-");
                auto& g = grids[id];
                g.params = echo_params(spec.base);
                g.zeta_values = spec.zeta_values;
                g.beta_values = spec.beta_values;
                for (double z : spec.zeta_values)
                    for (double b : spec.beta_values) g.cells.push_back({z, b, "queued", {}, {}});
                body = {{"id", id},
                        {"status", g.status},
                        {"params", g.params},
                        {"zeta_values", g.zeta_values},
                        {"beta_values", g.beta_values}};
            }
            enqueue([this, id, spec = std::move(spec)]() mutable { run_grid(id, std::move(spec)); });
            send_json(res, 202, body);
        });

        server.Get(R"(/api/grids/([A-Za-z0-9-]+))", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex);
            auto it = grids.find(req.matches[1]);
            if (it == grids.end()) return send_error(res, 404, "unknown grid");
            const auto& g = it->second;
            json body{{"id", it->first},
                      {"status", g.status},
                      {"params", g.params},
                      {"zeta_values", g.zeta_values},
                      {"beta_values", g.beta_values},
                      {"cells", cells_json(g, it->first)}};
            if (!g.error.empty()) body["error"] = g.error;
            if (g.status == "done") body["inversions"] = g.inversions;
            send_json(res, 200, body);
        });

        server.Get(R"(/api/grids/([A-Za-z0-9-]+)/cell/(\d+)/(\d+)\.png)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                       std::lock_guard lock(mutex);
                       auto it = grids.find(req.matches[1]);
                       if (it == grids.end()) return send_error(res, 404, "unknown grid");
                       const auto& g = it->second;
                       const std::size_t i = std::stoul(req.matches[2]), j = std::stoul(req.matches[3]);
                       if (i >= g.zeta_values.size() || j >= g.beta_values.size())
                           return send_error(res, 404, "cell index out of range");
                       const auto& c = g.cells[i * g.beta_values.size() + j];
                       if (c.status != "done")
                           return send_json(res, 409, {{"error", c.error.empty() ? "cell is " + c.status : c.error},
                                                       {"status", c.status},
                                                       {"zeta", c.zeta},
                                                       {"beta", c.beta}});
                       res.set_header("X-Mixsa-Zeta", std::to_string(c.zeta));
                       res.set_header("X-Mixsa-Beta", std::to_string(c.beta));
                       res.set_content(std::string(c.png.begin(), c.png.end()), "image/png");
                   });
    }

    void shutdown() {
        server.stop();
        if (server_thread.joinable()) server_thread.join();
        {
            std::lock_guard lock(mutex);
            stopping = true;
        }
        work_cv.notify_all();
        if (worker.joinable()) worker.join();
    }
};

SketchService::SketchService(std::shared_ptr<SketchPipeline> pipeline, SketchJob defaults,
                             std::filesystem::path out_root)
    : impl_(std::make_unique<Impl>(std::move(pipeline), std::move(defaults), std::move(out_root))) {}

SketchService::~SketchService() { impl_->shutdown(); }

int SketchService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void SketchService::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port))
        throw Error(ErrorKind::io, "cannot listen on " + host + ":" + std::to_string(port));
}

void SketchService::stop() { impl_->server.stop(); }

void SketchService::wait_idle() {
    std::unique_lock lock(impl_->mutex);
    impl_->idle_cv.wait(lock, [&] { return impl_->queue.empty() && !impl_->busy; });
}

}  // namespace mixsa
