// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fastocr/attention.hpp"
#include "fastocr/kv_store.hpp"
#include "fastocr/policy.hpp"

namespace fastocr::toy {

using TokenId = std::int32_t;

struct ModelConfig {
    std::size_t num_layers = 8;
    std::size_t hidden_dim = 64;
    std::size_t num_heads = 4;
    std::size_t vocab_size = 256;
    std::size_t patch_dim = 16;  // length of a synthetic image-patch descriptor
    std::uint64_t seed = 0;

    void validate() const;
    attn::HeadConfig heads() const { return attn::HeadConfig::from_hidden(hidden_dim, num_heads); }
};

/// Row-major dense matrix; products are taken as row vector times matrix (y = x W).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data).subspan(r * cols, cols);
    }
};

/// y = x W. Adds rows * cols to `multiply_adds` when given.
Vec matvec(std::span<const double> x, const Matrix& w, std::uint64_t* multiply_adds = nullptr);

struct LayerWeights {
    Matrix w_q;
    Matrix w_k;
    Matrix w_v;
    Matrix w_o;
};

/**
 * @brief Seed-determined weights of the toy decoder.
 *
 * Every entry is drawn from std::mt19937_64 seeded with ModelConfig::seed, whose raw output sequence is fixed
 * by the C++ standard. A 64-bit draw x maps to u = (x >> 11) * 2^-53 in [0, 1) and to the entry
 * (2u - 1) * sqrt(3 / h): a unit-variance uniform scaled by 1/sqrt(h). Draw order: for each layer W_Q, W_K,
 * W_V, W_O; then the embedding table (V x h), the unembedding (h x V), and the patch embedder
 * (patch_dim x h), each row-major.
 */
struct ModelWeights {
    ModelConfig config;
    std::vector<LayerWeights> layers;
    Matrix embedding;
    Matrix unembedding;
    Matrix patch_embedder;
};

ModelWeights init_model(const ModelConfig& config);

/// Sinusoidal position signal scaled by 1/sqrt(h), added to token and patch embeddings.
Vec position_signal(std::size_t position, std::size_t hidden_dim);

/**
 * Synthetic image-patch descriptor: patch_dim uniform [-1, 1) values from std::mt19937_64 seeded with
 * seed ^ 0x9E3779B97F4A7C15, drawn patch by patch in order.
 */
std::vector<Vec> patch_descriptors(std::uint64_t seed, std::size_t num_patches, std::size_t patch_dim);

/// Prompt token ids derived from a seed (std::mt19937_64 seeded with seed ^ 0xD1B54A32D192ED03, x mod V).
std::vector<TokenId> synthetic_prompt(std::uint64_t seed, std::size_t length, std::size_t vocab_size);

/// Greedy choice: highest logit, ties to the lower token id.
TokenId argmax(std::span<const double> logits);

struct SessionOptions {
    /// Runs a shadow full pass per layer so records carry oracle weights. Does not alter generation.
    bool instrumented = false;
};

/**
 * @brief One greedy decode session of the toy decoder under a KV policy.
 *
 * prefill() pushes image then prompt positions through every layer with full causal attention and picks the
 * first decoding input from the last prompt position. Each decode_step() registers that input as a Text
 * position, runs the policy's per-layer attention (appending the input's K/V at every layer), and returns the
 * argmax of the final residual stream, which becomes the next input.
 */
class DecodeSession {
public:
    DecodeSession(std::shared_ptr<const ModelWeights> weights, std::unique_ptr<DecodePolicy> policy,
                  SessionOptions options = {});

    void prefill(std::size_t num_image_tokens, std::span<const TokenId> prompt);
    TokenId decode_step();
    std::vector<TokenId> generate(std::size_t n_steps);

    std::size_t step() const { return m_generated.size(); }
    const std::vector<TokenId>& generated() const { return m_generated; }
    const std::vector<StepRecord>& records() const { return m_records; }
    const std::vector<Vec>& logits() const { return m_logits; }
    const kv::SessionCache& cache() const { return m_cache; }
    const DecodePolicy& policy() const { return *m_policy; }
    /// Positions registered by prefill (image plus prompt).
    std::size_t prefill_length() const { return m_prefill_length; }

private:
    class Executor;
    friend class Executor;

    Vec embed_token(TokenId token, std::size_t position) const;
    void prefill_position(Vec x, kv::TokenType type, std::vector<double>* layer_ratios);

    std::shared_ptr<const ModelWeights> m_weights;
    std::unique_ptr<DecodePolicy> m_policy;
    SessionOptions m_options;
    kv::SessionCache m_cache;
    attn::HeadConfig m_heads;
    bool m_prefilled = false;
    std::size_t m_prefill_length = 0;
    TokenId m_next_input = 0;
    Vec m_prefill_hidden;
    std::vector<TokenId> m_generated;
    std::vector<StepRecord> m_records;
    std::vector<Vec> m_logits;
};

}  // namespace fastocr::toy
