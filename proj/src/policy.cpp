// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/policy.hpp"

#include <stdexcept>

#include "fastocr/fixation_policy.hpp"

namespace fastocr {

const char* to_string(AttentionMode mode) {
    return mode == AttentionMode::Full ? "full" : "gathered";
}

const char* to_string(Phase phase) {
    return phase == Phase::Warmup ? "warmup" : "steady";
}

Vec scatter(std::span<const std::size_t> positions, std::span<const double> weights, std::size_t n) {
    if (positions.size() != weights.size()) {
        throw std::invalid_argument("scatter: positions and weights differ in length");
    }
    Vec dense(n, 0.0);
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (positions[i] >= n) {
            throw std::out_of_range("scatter: position beyond dense length");
        }
        dense[positions[i]] = weights[i];
    }
    return dense;
}

double image_ratio_of(const kv::SessionCache& cache, std::span<const std::size_t> positions,
                      std::span<const double> weights) {
    std::vector<std::size_t> image_idx;
    std::vector<std::size_t> text_idx;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        (cache.token_type(positions[i]) == kv::TokenType::Image ? image_idx : text_idx).push_back(i);
    }
    return fixation::image_attention_ratio(weights, image_idx, text_idx);
}

LayerRecord run_layer(const kv::SessionCache& cache, LayerExecutor& exec, std::size_t layer,
                      std::span<const std::size_t> positions, AttentionMode mode, bool instrumented,
                      Vec* head_avg_out) {
    LayerRecord rec;
    rec.mode = mode;
    rec.attended.assign(positions.begin(), positions.end());
    if (instrumented) {
        rec.oracle_weights = exec.shadow_full(layer);
    }
    LayerExecutor::Outcome out = exec.attend(layer, positions);
    if (out.head_avg.size() != positions.size()) {
        throw std::logic_error("executor returned weights of the wrong length");
    }
    rec.multiply_adds = out.multiply_adds;
    rec.image_ratio = image_ratio_of(cache, positions, out.head_avg);
    if (head_avg_out != nullptr) {
        *head_avg_out = std::move(out.head_avg);
    }
    return rec;
}

StepRecord begin_record(const kv::SessionCache& cache, std::size_t step, Phase phase) {
    StepRecord rec;
    rec.step = step;
    rec.phase = phase;
    rec.num_positions = cache.num_positions();
    for (std::size_t p = 0; p < cache.num_positions(); ++p) {
        if (cache.token_type(p) == kv::TokenType::Image) {
            rec.image_positions.push_back(p);
        }
    }
    rec.layers.reserve(cache.num_layers());
    return rec;
}

}  // namespace fastocr
