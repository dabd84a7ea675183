// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fastocr/policy.hpp"

namespace fastocr::flops {

using Flops = std::uint64_t;

/// Inputs of the per-step self-attention cost b * l * (8h^2 + 4hs).
struct FlopsConfig {
    std::uint64_t batch = 1;
    std::uint64_t layers = 1;
    std::uint64_t hidden = 1;
    std::uint64_t seqlen = 1;
};

struct PolicyFlopsBreakdown {
    Flops projection_flops = 0;  // b * sum_i 8h^2
    Flops attention_flops = 0;   // b * sum_i 4h s_i
    Flops total = 0;
    std::vector<std::uint64_t> per_layer_context;  // s_i
};

/// Exact b * l * (8h^2 + 4hs). Throws std::overflow_error instead of wrapping.
Flops attention_flops(const FlopsConfig& cfg);

/// Cost of one decoding token for one layer attending `context` positions: 8h^2 + 4h * context.
Flops layer_flops(std::uint64_t hidden, std::uint64_t context);

/// Per-layer composition: n_focal layers at s_full, the rest at s_pruned.
PolicyFlopsBreakdown fastocr_flops(std::uint64_t batch, std::uint64_t layers, std::uint64_t hidden,
                                   std::uint64_t s_full, std::uint64_t n_focal, std::uint64_t s_pruned);

/// Breakdown from explicit per-layer contexts.
PolicyFlopsBreakdown breakdown_from_contexts(std::uint64_t batch, std::uint64_t hidden,
                                             std::span<const std::uint64_t> contexts);

struct MeasuredFlops {
    std::vector<PolicyFlopsBreakdown> per_step;
    double mean_total = 0.0;
    /// Mean over steps and layers of the effective context length.
    double mean_context = 0.0;
};

/// Per-step cost from recorded attended-set sizes (batch 1).
MeasuredFlops measured_breakdown(std::span<const StepRecord> records, std::uint64_t hidden);

/// Presentation rounding: "19.33" for 19,327,352,832.
std::string format_giga(Flops value);

/**
 * Solves b * [n_focal * (8h^2 + 4h s_full) + (L - n_focal) * (8h^2 + 4h s)] = total for s. Used to recover the
 * effective pruned context implied by a reported FLOPs figure.
 */
double solve_pruned_context(std::uint64_t batch, std::uint64_t layers, std::uint64_t hidden, std::uint64_t s_full,
                            std::uint64_t n_focal, double total_flops);

}  // namespace fastocr::flops
