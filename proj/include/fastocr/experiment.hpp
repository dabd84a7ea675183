// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastocr/policy.hpp"
#include "fastocr/report.hpp"
#include "fastocr/run_config.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::experiment {

/// A run broke a structural invariant; the message names it.
class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct PolicySpec {
    std::string label;
    std::string name;  // fastocr | vanilla | fastv | h2o
    fixation::FixationConfig fixation;
    baseline::FastVConfig fastv;
    baseline::H2OConfig h2o;

    report::Json parameters() const;
};

/// Policy of the given name with parameters from the config (`policy.focal_layers = all` expanded).
PolicySpec spec_from_config(const config::RunConfig& cfg, const std::string& name);

std::unique_ptr<DecodePolicy> make_policy(const PolicySpec& spec, std::size_t num_layers);

struct SeedRun {
    std::uint64_t seed = 0;
    std::vector<std::int32_t> tokens;  // empty for trace-driven workloads
    std::vector<StepRecord> records;
    std::vector<std::size_t> focal_layers;
    std::size_t num_image_tokens = 0;
    std::size_t num_text_tokens = 0;
};

struct PolicyRun {
    PolicySpec spec;
    std::vector<SeedRun> seeds;
};

/// Runs one policy on every configured seed of the configured workload.
PolicyRun execute(const config::RunConfig& cfg, const PolicySpec& spec, bool instrumented);

/// Structural checks on recorded steps. Throws InvariantViolation.
void check_invariants(const PolicyRun& run, std::size_t num_layers);

report::PolicyEntry summarize(const PolicyRun& run, const PolicyRun* reference, std::uint64_t hidden_dim,
                              std::size_t num_layers);

/// Mean over seeds of each (step, layer) image ratio, preferring oracle weights when recorded.
std::vector<report::RatioRow> ratio_rows(const PolicyRun& run);

/**
 * Per-layer contexts a fixation run implies for budget matching: the mid-run full context and the pruned
 * context |T| + ceil(kappa * N_img).
 */
struct BudgetPoint {
    std::size_t num_layers = 0;
    std::size_t n_img = 0;
    std::size_t s_full = 0;
    std::size_t n_focal = 0;
    std::size_t s_pruned = 0;
};

BudgetPoint budget_point(const config::RunConfig& cfg, const PolicySpec& fastocr_spec);

struct CommandResult {
    report::Report report;
    std::optional<trace::TraceFile> trace;  // first seed's weights, when the workload provides them
};

CommandResult cmd_run(const config::RunConfig& cfg);
CommandResult cmd_compare(const config::RunConfig& cfg);
CommandResult cmd_profile(const config::RunConfig& cfg);
CommandResult cmd_replay(const config::RunConfig& cfg);

/// Writes the JSON report, the ratio CSV and the trace to the configured paths. Returns the JSON text.
std::string write_outputs(const config::RunConfig& cfg, const CommandResult& result);

}  // namespace fastocr::experiment
