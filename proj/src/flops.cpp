// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/flops.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace fastocr::flops {

namespace {

Flops mul(Flops a, Flops b) {
    Flops out = 0;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw std::overflow_error("FLOPs count overflows 64 bits");
    }
    return out;
}

Flops add(Flops a, Flops b) {
    Flops out = 0;
    if (__builtin_add_overflow(a, b, &out)) {
        throw std::overflow_error("FLOPs count overflows 64 bits");
    }
    return out;
}

Flops projection_term(std::uint64_t hidden) { return mul(8, mul(hidden, hidden)); }

Flops context_term(std::uint64_t hidden, std::uint64_t context) { return mul(4, mul(hidden, context)); }

}  // namespace

Flops attention_flops(const FlopsConfig& cfg) {
    return mul(mul(cfg.batch, cfg.layers), layer_flops(cfg.hidden, cfg.seqlen));
}

Flops layer_flops(std::uint64_t hidden, std::uint64_t context) {
    return add(projection_term(hidden), context_term(hidden, context));
}

PolicyFlopsBreakdown breakdown_from_contexts(std::uint64_t batch, std::uint64_t hidden,
                                             std::span<const std::uint64_t> contexts) {
    PolicyFlopsBreakdown out;
    out.per_layer_context.assign(contexts.begin(), contexts.end());
    for (std::uint64_t s : contexts) {
        out.projection_flops = add(out.projection_flops, mul(batch, projection_term(hidden)));
        out.attention_flops = add(out.attention_flops, mul(batch, context_term(hidden, s)));
    }
    out.total = add(out.projection_flops, out.attention_flops);
    return out;
}

PolicyFlopsBreakdown fastocr_flops(std::uint64_t batch, std::uint64_t layers, std::uint64_t hidden,
                                   std::uint64_t s_full, std::uint64_t n_focal, std::uint64_t s_pruned) {
    if (n_focal > layers) {
        throw std::invalid_argument("n_focal exceeds the layer count");
    }
    if (s_pruned > s_full) {
        throw std::invalid_argument("s_pruned exceeds s_full");
    }
    std::vector<std::uint64_t> contexts(layers, s_pruned);
    for (std::uint64_t i = 0; i < n_focal; ++i) {
        contexts[i] = s_full;
    }
    return breakdown_from_contexts(batch, hidden, contexts);
}

MeasuredFlops measured_breakdown(std::span<const StepRecord> records, std::uint64_t hidden) {
    MeasuredFlops out;
    if (records.empty()) {
        return out;
    }
    double total_sum = 0.0;
    double context_sum = 0.0;
    std::size_t context_count = 0;
    for (const StepRecord& rec : records) {
        std::vector<std::uint64_t> contexts;
        contexts.reserve(rec.layers.size());
        for (const LayerRecord& lr : rec.layers) {
            contexts.push_back(lr.attended.size());
            context_sum += static_cast<double>(lr.attended.size());
            ++context_count;
        }
        out.per_step.push_back(breakdown_from_contexts(1, hidden, contexts));
        total_sum += static_cast<double>(out.per_step.back().total);
    }
    out.mean_total = total_sum / static_cast<double>(records.size());
    out.mean_context = context_count ? context_sum / static_cast<double>(context_count) : 0.0;
    return out;
}

std::string format_giga(Flops value) {
    const Flops hundredths = (value / 5'000'000 + 1) / 2;  // round half up at 1e7 granularity
    return fmt::format("{}.{:02}", hundredths / 100, hundredths % 100);
}

double solve_pruned_context(std::uint64_t batch, std::uint64_t layers, std::uint64_t hidden, std::uint64_t s_full,
                            std::uint64_t n_focal, double total_flops) {
    if (n_focal >= layers) {
        throw std::invalid_argument("no pruned layers to solve for");
    }
    const auto b = static_cast<double>(batch);
    const auto h = static_cast<double>(hidden);
    const double projections = b * static_cast<double>(layers) * 8.0 * h * h;
    const double focal_attention = b * static_cast<double>(n_focal) * 4.0 * h * static_cast<double>(s_full);
    return (total_flops - projections - focal_attention) / (b * static_cast<double>(layers - n_focal) * 4.0 * h);
}

}  // namespace fastocr::flops
