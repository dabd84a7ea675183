// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fastocr::attn {

void HeadConfig::validate() const {
    if (num_heads == 0 || head_dim == 0) {
        throw std::invalid_argument("head config requires num_heads >= 1 and head_dim >= 1");
    }
}

HeadConfig HeadConfig::from_hidden(std::size_t hidden_dim, std::size_t num_heads) {
    if (num_heads == 0 || hidden_dim == 0 || hidden_dim % num_heads != 0) {
        throw std::invalid_argument("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by num_heads " +
                                    std::to_string(num_heads));
    }
    return HeadConfig{num_heads, hidden_dim / num_heads};
}

Vec softmax(std::span<const double> scores) {
    if (scores.empty()) {
        throw std::invalid_argument("empty score vector");
    }
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("non-finite score");
        }
    }
    const double max_score = *std::max_element(scores.begin(), scores.end());
    Vec out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - max_score);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

namespace {

void check_row(std::span<const double> row, std::size_t hidden, const char* what) {
    if (row.size() != hidden) {
        throw std::invalid_argument(std::string(what) + " has dimension " + std::to_string(row.size()) +
                                    ", expected " + std::to_string(hidden));
    }
}

// Context entry j is keys[index_of(j)] / values[index_of(j)].
template <typename IndexFn>
AttentionResult attend_indexed(std::span<const double> query,
                               std::span<const Vec> keys,
                               std::span<const Vec> values,
                               std::size_t context_len,
                               IndexFn index_of,
                               const HeadConfig& cfg) {
    cfg.validate();
    const std::size_t hidden = cfg.hidden_dim();
    check_row(query, hidden, "query");
    if (keys.size() != values.size()) {
        throw std::invalid_argument("keys and values differ in length");
    }
    if (context_len == 0) {
        throw std::invalid_argument("empty attention context");
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

    AttentionResult result;
    result.output.assign(hidden, 0.0);
    result.weights.num_heads = cfg.num_heads;
    result.weights.context_len = context_len;
    result.weights.per_head.resize(cfg.num_heads * context_len);

    Vec scores(context_len);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const std::size_t off = h * cfg.head_dim;
        for (std::size_t j = 0; j < context_len; ++j) {
            const Vec& k = keys[index_of(j)];
            double dot = 0.0;
            for (std::size_t d = 0; d < cfg.head_dim; ++d) {
                dot += query[off + d] * k[off + d];
            }
            scores[j] = dot * scale;
        }
        result.multiply_adds += context_len * cfg.head_dim;

        Vec w = softmax(scores);
        std::copy(w.begin(), w.end(), result.weights.per_head.begin() + static_cast<std::ptrdiff_t>(h * context_len));

        for (std::size_t j = 0; j < context_len; ++j) {
            const Vec& v = values[index_of(j)];
            for (std::size_t d = 0; d < cfg.head_dim; ++d) {
                result.output[off + d] += w[j] * v[off + d];
            }
        }
        result.multiply_adds += context_len * cfg.head_dim;
    }
    result.weights.head_avg = head_average(result.weights);
    return result;
}

void check_context(std::span<const Vec> keys, std::span<const Vec> values, std::size_t hidden) {
    if (keys.size() != values.size()) {
        throw std::invalid_argument("keys and values differ in length");
    }
    for (std::size_t j = 0; j < keys.size(); ++j) {
        check_row(keys[j], hidden, "key");
        check_row(values[j], hidden, "value");
    }
}

}  // namespace

AttentionResult attend_full(std::span<const double> query,
                            std::span<const Vec> keys,
                            std::span<const Vec> values,
                            const HeadConfig& cfg) {
    cfg.validate();
    check_context(keys, values, cfg.hidden_dim());
    return attend_indexed(query, keys, values, keys.size(), [](std::size_t j) { return j; }, cfg);
}

AttentionResult attend_gathered(std::span<const double> query,
                                std::span<const Vec> keys,
                                std::span<const Vec> values,
                                std::span<const std::size_t> kept_positions,
                                const HeadConfig& cfg) {
    cfg.validate();
    if (kept_positions.empty()) {
        throw std::invalid_argument("empty attention context");
    }
    if (keys.size() != values.size()) {
        throw std::invalid_argument("keys and values differ in length");
    }
    for (std::size_t i = 0; i < kept_positions.size(); ++i) {
        const std::size_t p = kept_positions[i];
        if (p >= keys.size()) {
            throw std::out_of_range("kept position " + std::to_string(p) + " out of range for context of " +
                                    std::to_string(keys.size()));
        }
        if (i > 0 && p <= kept_positions[i - 1]) {
            throw std::invalid_argument("kept positions must be strictly ascending");
        }
        check_row(keys[p], cfg.hidden_dim(), "key");
        check_row(values[p], cfg.hidden_dim(), "value");
    }
    return attend_indexed(query, keys, values, kept_positions.size(),
                          [kept_positions](std::size_t j) { return kept_positions[j]; }, cfg);
}

Vec head_average(const AttentionWeights& weights) {
    if (weights.num_heads == 0 || weights.per_head.size() != weights.num_heads * weights.context_len) {
        throw std::invalid_argument("malformed attention weights");
    }
    Vec avg(weights.context_len, 0.0);
    for (std::size_t h = 0; h < weights.num_heads; ++h) {
        const auto row = weights.row(h);
        for (std::size_t j = 0; j < weights.context_len; ++j) {
            avg[j] += row[j];
        }
    }
    const double n = static_cast<double>(weights.num_heads);
    for (double& a : avg) {
        a /= n;
    }
    return avg;
}

}  // namespace fastocr::attn
