// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "fastocr/cli.hpp"

int main(int argc, char** argv) {
    fastocr::cli::configure_logging();
    return fastocr::cli::run(argc, argv, std::cout, std::cerr);
}
