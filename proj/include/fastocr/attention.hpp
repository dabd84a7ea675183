// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fastocr {

using Vec = std::vector<double>;

namespace attn {

/**
 * @brief Multi-head layout of a hidden vector: num_heads contiguous slices of head_dim entries.
 */
struct HeadConfig {
    std::size_t num_heads = 1;
    std::size_t head_dim = 1;

    std::size_t hidden_dim() const { return num_heads * head_dim; }

    /// Throws std::invalid_argument when any dimension is zero.
    void validate() const;

    static HeadConfig from_hidden(std::size_t hidden_dim, std::size_t num_heads);
};

/**
 * @brief Attention weights of one decoding query over the attended context.
 *
 * per_head is row-major (num_heads x context_len); head_avg is the column mean.
 */
struct AttentionWeights {
    std::size_t num_heads = 0;
    std::size_t context_len = 0;
    Vec per_head;
    Vec head_avg;

    std::span<const double> row(std::size_t head) const {
        return std::span<const double>(per_head).subspan(head * context_len, context_len);
    }
};

struct AttentionResult {
    Vec output;
    AttentionWeights weights;
    /// Multiply-adds actually executed (scores plus weighted value sum).
    std::uint64_t multiply_adds = 0;
};

/// Max-subtracted softmax. Throws on empty input or non-finite scores.
Vec softmax(std::span<const double> scores);

AttentionResult attend_full(std::span<const double> query,
                            std::span<const Vec> keys,
                            std::span<const Vec> values,
                            const HeadConfig& cfg);

/**
 * Attention restricted to kept_positions, which index into keys/values and must be strictly ascending.
 * Gathering preserves position order, so kept_positions == [0, n) reproduces attend_full bit for bit.
 */
AttentionResult attend_gathered(std::span<const double> query,
                                std::span<const Vec> keys,
                                std::span<const Vec> values,
                                std::span<const std::size_t> kept_positions,
                                const HeadConfig& cfg);

/// Column mean over heads of a (num_heads x context_len) row-major matrix.
Vec head_average(const AttentionWeights& weights);

}  // namespace attn
}  // namespace fastocr
