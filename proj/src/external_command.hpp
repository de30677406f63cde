// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mixsa/image.hpp"

#include <string>
#include <utility>
#include <vector>

namespace mixsa::detail {

// Writes `img` to a temporary PNG, runs the shell command built from
// `command_template` ({input}/{output} plus `extra` substitutions) and reads
// the PNG the command left at {output}.
ImageBuffer run_image_command(const std::string& command_template, const ImageBuffer& img,
                              const std::vector<std::pair<std::string, std::string>>& extra);

}  // namespace mixsa::detail
