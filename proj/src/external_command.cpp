// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "external_command.hpp"

#include "mixsa/common.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <unistd.h>

namespace mixsa::detail {

namespace {

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    return out + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

// Removes the scratch directory on every exit path.
struct ScratchDir {
    std::filesystem::path path;
    ScratchDir() {
        static std::atomic<unsigned> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("mixsa-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

}  // namespace

ImageBuffer run_image_command(const std::string& command_template, const ImageBuffer& img,
                              const std::vector<std::pair<std::string, std::string>>& extra) {
    ScratchDir scratch;
    const auto input = scratch.path / "input.png";
    const auto output = scratch.path / "output.png";
    write_png(img, input);

    std::string command = command_template;
    replace_all(command, "{input}", quote(input.string()));
    replace_all(command, "{output}", quote(output.string()));
    for (const auto& [key, value] : extra) replace_all(command, key, quote(value));

    const int status = std::system(command.c_str());
    if (status != 0)
        throw Error(ErrorKind::adapter, "command exited with status " + std::to_string(status) + ": " + command);
    if (!std::filesystem::exists(output))
        throw Error(ErrorKind::adapter, "command produced no output image: " + command);
    return read_image(output);
}

}  // namespace mixsa::detail
