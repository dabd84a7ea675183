// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastocr/policy.hpp"

namespace fastocr::trace {

/// Malformed trace input, or a trace that cannot drive the requested replay.
class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief Planted-fixation generator settings.
 *
 * At step index s (0-based) the window center is c_s = clamp(c_0 + s * d, 0, N - 1). Image weights follow a
 * Gaussian of width sigma around c_s, mixed with a uniform noise vector at rate epsilon, then scaled to the
 * layer-class image mass. The remaining mass is spread evenly over text positions.
 */
struct PlantedConfig {
    std::size_t num_layers = 10;
    std::size_t num_image_tokens = 200;
    std::size_t num_text_tokens = 16;  // prompt text positions; each step adds one decoding position
    std::vector<std::size_t> focal_like_layers{2, 5, 7};
    double image_mass_focal = 0.422;
    double image_mass_nonfocal = 0.143;
    double window_center = 10.0;
    double window_sigma = 3.0;
    double drift = 1.0;
    double noise = 0.0;
    std::size_t num_steps = 30;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PlantedTrace {
    PlantedConfig config;
    std::vector<std::vector<Vec>> weights;  // [step index][layer], dense over the step's context
    std::vector<double> centers;            // window center per step index

    std::size_t context_length(std::size_t step_index) const;
};

PlantedTrace generate_trace(const PlantedConfig& config);

/**
 * @brief In-memory trace file: head-averaged weights per (step, layer) over every registered position.
 *
 * Steps are 1-based in the file; steps[t - 1][l] holds step t. The context at step t has
 * num_image_tokens + num_text_tokens + t positions: image positions first, then prompt text, then one
 * decoding position per step.
 */
struct TraceFile {
    std::size_t num_layers = 0;
    std::size_t num_image_tokens = 0;
    std::size_t num_text_tokens = 0;
    std::string source = "external";
    std::vector<std::vector<Vec>> steps;

    std::size_t num_steps() const { return steps.size(); }
    std::size_t context_length(std::size_t step) const { return num_image_tokens + num_text_tokens + step; }

    /// Throws TraceError when the grid or any weight vector is inconsistent with the header.
    void validate() const;
};

TraceFile to_trace_file(const PlantedTrace& trace);

/// Trace of the instrumented oracle weights recorded by a live session.
TraceFile trace_from_records(std::span<const StepRecord> records, std::size_t num_layers,
                             std::size_t num_image_tokens, std::size_t num_text_tokens);

void write_trace(const TraceFile& trace, std::ostream& out);
void write_trace(const TraceFile& trace, const std::filesystem::path& path);

/// Parses a trace; errors carry the 1-based line number and, for body lines, the step and layer.
TraceFile read_trace(std::istream& in);
TraceFile read_trace(const std::filesystem::path& path);

struct ReplayOptions {
    bool instrumented = true;
    /// Replays the first `max_steps` steps only (0 = all).
    std::size_t max_steps = 0;
};

/**
 * @brief Drives a policy with recorded weights in place of live queries.
 *
 * Each layer's attended weights are the recorded vector restricted to the attended positions and
 * renormalized. Instrumented replays attach the full recorded vector as the oracle.
 */
std::vector<StepRecord> replay(const TraceFile& trace, DecodePolicy& policy, ReplayOptions options = {});

}  // namespace fastocr::trace
