// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastocr/attention.hpp"
#include "fastocr/kv_store.hpp"

namespace fastocr {

enum class AttentionMode { Full, Gathered };
enum class Phase { Warmup, Steady };

const char* to_string(AttentionMode mode);
const char* to_string(Phase phase);

/// What one layer did during one decode step.
struct LayerRecord {
    AttentionMode mode = AttentionMode::Full;
    /// Positions actually attended, ascending. Its size is the layer's effective context length.
    std::vector<std::size_t> attended;
    /// Image attention ratio of the weights actually computed at this layer.
    double image_ratio = 0.0;
    /// Focal tokens selected (or, at layer 0, inherited) at this layer.
    std::optional<std::vector<std::size_t>> focal_tokens;
    bool inherited = false;
    /// Multiply-adds of the self-attention sublayer, when the executor counts them.
    std::uint64_t multiply_adds = 0;
    /// Instrumented runs only: head-averaged weights of a shadow full pass, dense over all registered positions.
    std::optional<Vec> oracle_weights;
};

/// Observability carrier for one decode step of any policy.
struct StepRecord {
    std::size_t step = 0;  // 1-based decode step
    Phase phase = Phase::Warmup;
    std::size_t num_positions = 0;  // registered positions including the decoding token
    std::vector<std::size_t> image_positions;  // every registered image position, evicted or not
    std::vector<LayerRecord> layers;
    std::vector<std::size_t> focal_layers;  // frozen focal set, empty before selection
    std::optional<std::vector<std::size_t>> f_last;  // carried focal tokens after this step
    std::size_t unreachable = 0;  // positions evicted from at least one layer, after this step
};

/**
 * @brief Runs per-layer attention for the current decoding query.
 *
 * Implemented by the toy model (live queries) and by trace replay (recorded weights). Layers must be
 * attended in ascending order, exactly once each per step.
 */
class LayerExecutor {
public:
    struct Outcome {
        Vec head_avg;  // aligned with the attended positions
        std::uint64_t multiply_adds = 0;
    };

    virtual ~LayerExecutor() = default;

    virtual Outcome attend(std::size_t layer, std::span<const std::size_t> positions) = 0;

    /// Head-averaged weights of a full pass over every registered position, without side effects.
    virtual Vec shadow_full(std::size_t layer) = 0;
};

/**
 * @brief A decode-time KV policy: decides per layer which cached positions the query attends.
 */
class DecodePolicy {
public:
    virtual ~DecodePolicy() = default;

    virtual std::string name() const = 0;

    /// Called once before the first decode step.
    virtual void on_session_start(kv::SessionCache& /*cache*/) {}

    /// Per-layer image attention ratios of the last prefill query.
    virtual void observe_prefill(std::span<const double> /*per_layer_ratio*/) {}

    /// Runs one decode step. The decoding token is already registered in `cache`.
    virtual StepRecord step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) = 0;
};

/// Expands weights aligned with `positions` into a dense vector of length `n` (zeros elsewhere).
Vec scatter(std::span<const std::size_t> positions, std::span<const double> weights, std::size_t n);

/// Image attention ratio of weights aligned with `positions`, using the cache's token typing.
double image_ratio_of(const kv::SessionCache& cache, std::span<const std::size_t> positions,
                      std::span<const double> weights);

/// Attends one layer through `exec` and fills a LayerRecord, including the shadow oracle when instrumented.
LayerRecord run_layer(const kv::SessionCache& cache, LayerExecutor& exec, std::size_t layer,
                      std::span<const std::size_t> positions, AttentionMode mode, bool instrumented,
                      Vec* head_avg_out = nullptr);

/// Fills the per-step header fields of a StepRecord from the cache.
StepRecord begin_record(const kv::SessionCache& cache, std::size_t step, Phase phase);

}  // namespace fastocr
