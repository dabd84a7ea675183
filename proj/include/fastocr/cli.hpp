// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace fastocr::cli {

enum ExitCode : int {
    kSuccess = 0,
    kUserError = 1,
    kInvariantViolation = 2,
};

/// Routes spdlog to stderr at the level named by FASTOCR_LOG (quiet, info, debug; default warnings only).
void configure_logging();

/// Parses arguments, runs the subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fastocr::cli
