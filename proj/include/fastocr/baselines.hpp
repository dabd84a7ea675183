// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fastocr/policy.hpp"

namespace fastocr::baseline {

/// Layer-K attention-score pruning of image tokens with ratio R.
struct FastVConfig {
    std::size_t prune_layer = 2;
    double prune_ratio = 0.5;

    void validate(std::size_t num_layers) const;
};

/// Heavy-hitter plus recency retention with ratio R for each part.
struct H2OConfig {
    double retain_ratio = 0.1;

    void validate() const;
};

struct HeavyHitterState {
    std::vector<double> accumulated;  // indexed by cache position
};

/**
 * The floor(R * N_img) lowest-weight image positions, ties evicting the higher position first. `dense_weights`
 * is indexed by cache position. Result is ascending.
 */
std::vector<std::size_t> fastv_evict(std::span<const double> dense_weights,
                                     std::span<const std::size_t> image_positions, double prune_ratio);

/// Adds head-averaged weights (aligned with `live_positions`) to the accumulated scores.
void h2o_update(HeavyHitterState& state, std::span<const std::size_t> live_positions,
                std::span<const double> head_avg);

/**
 * Positions to keep: the top ceil(R * n) live positions by accumulated score (ties to the lower position) united
 * with the ceil(R * n) most recent live positions, where n is `sequence_length`. Result is ascending.
 */
std::vector<std::size_t> h2o_retain(const HeavyHitterState& state, double retain_ratio,
                                    std::span<const std::size_t> live_positions, std::size_t sequence_length);

/// Full attention at every layer; never mutates the cache beyond appends.
class VanillaPolicy : public DecodePolicy {
public:
    std::string name() const override { return "vanilla"; }
    void on_session_start(kv::SessionCache& cache) override { cache.lock_eviction(); }
    StepRecord step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) override;

private:
    std::size_t m_step = 0;
};

/**
 * @brief Decode-time FastV: at the first decode step, layer K's attention picks image tokens to evict from
 * layers >= K for the rest of the session.
 */
class FastVPolicy : public DecodePolicy {
public:
    FastVPolicy(FastVConfig config, std::size_t num_layers);

    std::string name() const override { return "fastv"; }
    StepRecord step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) override;

    const std::vector<std::size_t>& evicted() const { return m_evicted; }

private:
    FastVConfig m_config;
    std::size_t m_num_layers;
    std::size_t m_step = 0;
    bool m_fired = false;
    std::vector<std::size_t> m_evicted;
};

/**
 * @brief H2O-style retention: accumulated layer-mean attention picks heavy hitters; retention and eviction run
 * after every decode step, across all layers and both modalities.
 */
class H2OPolicy : public DecodePolicy {
public:
    explicit H2OPolicy(H2OConfig config);

    std::string name() const override { return "h2o"; }
    StepRecord step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) override;

    const HeavyHitterState& state() const { return m_state; }

private:
    H2OConfig m_config;
    HeavyHitterState m_state;
    std::size_t m_step = 0;
};

/**
 * Budget matching: prune ratio R for FastV at layer K such that its per-step attention FLOPs equal a run in which
 * `n_focal` layers attend `s_full` positions and the rest attend `s_pruned`. Clamped to [0, 1].
 */
double match_fastv_ratio(std::size_t num_layers, std::size_t prune_layer, std::size_t n_img, std::size_t s_full,
                         std::size_t n_focal, std::size_t s_pruned);

/// Same matching for H2O, whose live context settles near 2 * R * s_full at every layer.
double match_h2o_ratio(std::size_t num_layers, std::size_t s_full, std::size_t n_focal, std::size_t s_pruned);

}  // namespace fastocr::baseline
