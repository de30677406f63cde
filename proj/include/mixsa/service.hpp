// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/pipeline.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace mixsa {

// HTTP front end over a single pipeline. Jobs and grids go through one queue
// worked by one thread, so the backend is never shared between jobs.
//
//   POST /api/jobs                      multipart: color, reference files; any
//                                       other field is a job parameter, and a
//                                       "params" field may hold key=value lines
//   GET  /api/jobs/{id}                 status, parameter echo, provenance
//   GET  /api/jobs/{id}/result.png
//   POST /api/grids                     as /api/jobs plus "zeta" and "beta" lists
//   GET  /api/grids/{id}                status of every cell
//   GET  /api/grids/{id}/cell/{i}/{j}.png
//   GET  /api/capabilities              backend, detectors, adapters, defaults
class SketchService {
public:
    SketchService(std::shared_ptr<SketchPipeline> pipeline, SketchJob defaults,
                  std::filesystem::path out_root = {});
    ~SketchService();

    SketchService(const SketchService&) = delete;
    SketchService& operator=(const SketchService&) = delete;

    // Binds and serves on a background thread; port 0 picks a free port.
    // Returns the bound port.
    int start(const std::string& host, int port);
    // Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    // Blocks until the queue is empty and the worker is idle.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mixsa
