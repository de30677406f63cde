// Copyright (C) 2026 mixsa contributors
// SPDX-License-Identifier: Apache-2.0

#include "mixsa/cli.hpp"

int main(int argc, char** argv) { return mixsa::cli::run(argc, argv); }
