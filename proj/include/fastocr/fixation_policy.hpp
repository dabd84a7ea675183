// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fastocr/kv_store.hpp"
#include "fastocr/policy.hpp"

namespace fastocr::fixation {

/**
 * @brief Hyperparameters of dynamic visual fixation.
 *
 * focal_layer_ratio bounds the focal set at floor(ratio * L) layers; focal_gap is the strict minimum index
 * distance between two focal layers; kept_token_ratio selects ceil(ratio * N_img) image tokens per focal
 * layer; warmup_steps is the number of unpruned profiling steps.
 */
struct FixationConfig {
    double focal_layer_ratio = 0.1;
    std::size_t focal_gap = 1;
    double kept_token_ratio = 0.05;
    std::size_t warmup_steps = 10;
    /// Bypasses ranked selection with a fixed focal set (identity and ablation runs).
    std::optional<std::vector<std::size_t>> forced_focal_layers;

    void validate() const;
};

struct WarmupStats {
    std::vector<std::vector<double>> ratios;  // [layer][step]

    std::vector<double> mean_ratios() const;
};

struct FocalSet {
    std::vector<std::size_t> layers;  // ascending
    bool frozen = false;

    bool contains(std::size_t layer) const;
    std::optional<std::size_t> deepest() const;
};

struct FocalTokens {
    std::vector<std::size_t> positions;  // ascending image positions
    std::size_t source_layer = 0;
    std::size_t step = 0;
};

struct PolicyState {
    FixationConfig config;
    std::size_t num_layers = 0;
    std::size_t step = 0;  // last started decode step, 1-based
    WarmupStats warmup;
    std::vector<double> prefill_ratios;  // only consulted when warmup_steps == 0
    FocalSet focal_set;
    std::optional<FocalTokens> f_last;

    Phase phase() const { return step <= config.warmup_steps ? Phase::Warmup : Phase::Steady; }
};

/// floor(ratio * num_layers), robust to representation error in the product.
std::size_t focal_budget(double focal_layer_ratio, std::size_t num_layers);

/// min(ceil(ratio * n_img), n_img), robust to representation error in the product.
std::size_t focal_token_count(double kept_token_ratio, std::size_t n_img);

/**
 * Fraction of head-averaged attention mass on image tokens. Indices address `head_avg`; positions in neither
 * list (e.g. evicted ones) do not contribute. Throws when both masses are zero.
 */
double image_attention_ratio(std::span<const double> head_avg,
                             std::span<const std::size_t> image_idx,
                             std::span<const std::size_t> text_idx);

/// Appends one warmup ratio for `layer`. Throws outside the warmup phase or for ratios outside [0, 1].
void record_warmup(PolicyState& state, std::size_t layer, double ratio);

/**
 * Greedy focal-layer selection: layers are visited by descending mean ratio (ties to the lower index) and
 * accepted while the budget allows and every already-chosen layer is more than `gap` indices away.
 * rho == 0 yields an empty set; a positive rho whose budget floors to zero throws.
 */
FocalSet select_focal_layers(std::span<const double> mean_ratios, double rho, std::size_t gap,
                             std::size_t num_layers);

/**
 * Top ceil(kappa * N_img) image positions by weight, ties to the lower position. `dense_weights` is indexed
 * by cache position; result positions are ascending.
 */
FocalTokens select_focal_tokens(std::span<const double> dense_weights,
                                std::span<const std::size_t> image_positions, double kappa);

/// How layer 0 obtained its kept set at the start of a steady step.
enum class LayerZeroSource { FocalBranch, Inherited, Fallback };

struct LayerZeroInit {
    LayerZeroSource source = LayerZeroSource::FocalBranch;
    kv::KeptSet kept;                   // empty for FocalBranch
    std::optional<FocalTokens> tokens;  // F at layer 0 (inherited or fallback)
};

/**
 * Cross-step fixation reuse for layer 0. `layer0_attend` must run full attention at layer 0 and return dense
 * head-averaged weights; it is invoked only on the fallback path (no carried tokens, layer 0 not focal).
 */
LayerZeroInit init_step_kept_set(const PolicyState& state, std::span<const std::size_t> text_positions,
                                 std::span<const std::size_t> image_positions,
                                 const std::function<Vec()>& layer0_attend);

/**
 * @brief The fixation policy: warmup profiling, focal-layer selection, cross-layer propagation of focal
 * tokens, and cross-step reuse of the deepest focal layer's tokens. Never evicts.
 */
class FixationPolicy : public DecodePolicy {
public:
    FixationPolicy(FixationConfig config, std::size_t num_layers);

    std::string name() const override { return "fastocr"; }
    void on_session_start(kv::SessionCache& cache) override;
    void observe_prefill(std::span<const double> per_layer_ratio) override;
    StepRecord step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) override;

    const PolicyState& state() const { return m_state; }

private:
    void select_layers();
    StepRecord warmup_step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented);
    StepRecord steady_step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented);

    PolicyState m_state;
};

}  // namespace fastocr::fixation
