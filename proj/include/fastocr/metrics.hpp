// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fastocr/policy.hpp"

namespace fastocr::metrics {

/// Longest common prefix over the longer length. Two empty sequences agree fully.
double prefix_agreement(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/// Positionwise matches over the shorter length, divided by the longer length. Two empty sequences give 1.
double token_match_rate(std::span<const std::int32_t> a, std::span<const std::int32_t> b);

/**
 * Share of the image attention mass (under oracle full-attention weights, indexed by position) that the kept
 * image positions capture. Zero total image mass gives 1.
 */
double attention_mass_recall(std::span<const double> full_head_avg, std::span<const std::size_t> kept_image_positions,
                             std::span<const std::size_t> image_positions);

/// |A ∩ B| / |A ∪ B| over position sets; two empty sets give 1.
double kept_set_jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b);

struct FocalFrequency {
    std::vector<double> per_layer;  // fraction of runs selecting each layer
    double mean_size = 0.0;
    std::size_t runs = 0;
};

FocalFrequency focal_layer_frequency(std::span<const std::vector<std::size_t>> focal_sets, std::size_t num_layers);

/**
 * @brief Order-independent accumulator. merge() is associative and commutative, so partial results from
 * parallel workers combine to the same value in any grouping.
 */
struct Accumulator {
    std::size_t count = 0;
    double sum = 0.0;
    double min = 0.0;
    double max = 0.0;

    void add(double value);
    void merge(const Accumulator& other);
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

/// Attention-quality summary of one run, computed from instrumented step records.
struct AttentionSummary {
    Accumulator gathered_recall;    // image mass recall of every gathered layer's kept set
    Accumulator inherited_recall;   // layer 0, when its kept set was inherited from the previous step
    Accumulator focal_recall;       // focal layers' own token selections
    Accumulator carried_jaccard;    // f_last overlap between consecutive steady steps
    Accumulator image_ratio;        // per-layer image attention ratio of the computed weights
    bool has_oracle = false;
};

AttentionSummary summarize_attention(std::span<const StepRecord> records);

/// Kept image positions of a layer record: attended positions that are image positions of the step.
std::vector<std::size_t> kept_image_positions(const StepRecord& step, const LayerRecord& layer);

}  // namespace fastocr::metrics
