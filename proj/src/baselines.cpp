// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <stdexcept>
#include <string>

namespace fastocr::baseline {

namespace {

constexpr double kRoundingSlack = 1e-9;

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
}

AttentionMode mode_for(std::size_t attended, std::size_t registered) {
    return attended == registered ? AttentionMode::Full : AttentionMode::Gathered;
}

}  // namespace

void FastVConfig::validate(std::size_t num_layers) const {
    check_unit(prune_ratio, "fastv prune_ratio");
    if (prune_layer >= num_layers) {
        throw std::invalid_argument("fastv prune_layer must be below the layer count");
    }
}

void H2OConfig::validate() const { check_unit(retain_ratio, "h2o retain_ratio"); }

std::vector<std::size_t> fastv_evict(std::span<const double> dense_weights,
                                     std::span<const std::size_t> image_positions, double prune_ratio) {
    check_unit(prune_ratio, "fastv prune_ratio");
    const auto n = static_cast<double>(image_positions.size());
    const auto count = std::min(image_positions.size(),
                                static_cast<std::size_t>(std::floor(prune_ratio * n + kRoundingSlack)));
    std::vector<std::size_t> ranked(image_positions.begin(), image_positions.end());
    for (std::size_t p : ranked) {
        if (p >= dense_weights.size()) {
            throw std::out_of_range("image position " + std::to_string(p) + " has no attention weight");
        }
    }
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(count), ranked.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (dense_weights[a] != dense_weights[b]) {
                              return dense_weights[a] < dense_weights[b];
                          }
                          return a > b;
                      });
    ranked.resize(count);
    std::sort(ranked.begin(), ranked.end());
    return ranked;
}

void h2o_update(HeavyHitterState& state, std::span<const std::size_t> live_positions,
                std::span<const double> head_avg) {
    if (live_positions.size() != head_avg.size()) {
        throw std::invalid_argument("h2o_update: weights length " + std::to_string(head_avg.size()) +
                                    " does not match " + std::to_string(live_positions.size()) + " live positions");
    }
    for (std::size_t i = 0; i < live_positions.size(); ++i) {
        const std::size_t p = live_positions[i];
        if (p >= state.accumulated.size()) {
            state.accumulated.resize(p + 1, 0.0);
        }
        state.accumulated[p] += head_avg[i];
    }
}

std::vector<std::size_t> h2o_retain(const HeavyHitterState& state, double retain_ratio,
                                    std::span<const std::size_t> live_positions, std::size_t sequence_length) {
    check_unit(retain_ratio, "h2o retain_ratio");
    const auto part = static_cast<std::size_t>(
        std::max(0.0, std::ceil(retain_ratio * static_cast<double>(sequence_length) - kRoundingSlack)));
    if (part >= live_positions.size()) {
        return {live_positions.begin(), live_positions.end()};
    }
    auto score = [&](std::size_t p) { return p < state.accumulated.size() ? state.accumulated[p] : 0.0; };

    std::vector<std::size_t> heavy(live_positions.begin(), live_positions.end());
    std::partial_sort(heavy.begin(), heavy.begin() + static_cast<std::ptrdiff_t>(part), heavy.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (score(a) != score(b)) {
                              return score(a) > score(b);
                          }
                          return a < b;
                      });
    heavy.resize(part);

    std::vector<std::size_t> kept(live_positions.end() - static_cast<std::ptrdiff_t>(part), live_positions.end());
    kept.insert(kept.end(), heavy.begin(), heavy.end());
    std::sort(kept.begin(), kept.end());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    return kept;
}

StepRecord VanillaPolicy::step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    StepRecord rec = begin_record(cache, ++m_step, Phase::Steady);
    for (std::size_t layer = 0; layer < cache.num_layers(); ++layer) {
        const auto all = cache.live_positions(layer);
        rec.layers.push_back(run_layer(cache, exec, layer, all, AttentionMode::Full, instrumented));
    }
    return rec;
}

FastVPolicy::FastVPolicy(FastVConfig config, std::size_t num_layers) : m_config(config), m_num_layers(num_layers) {
    m_config.validate(num_layers);
}

StepRecord FastVPolicy::step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    if (cache.num_layers() != m_num_layers) {
        throw std::invalid_argument("cache layer count does not match the policy");
    }
    StepRecord rec = begin_record(cache, ++m_step, Phase::Steady);
    const std::size_t n = cache.num_positions();
    for (std::size_t layer = 0; layer < m_num_layers; ++layer) {
        const auto live = cache.live_positions(layer);
        Vec head_avg;
        rec.layers.push_back(
            run_layer(cache, exec, layer, live, mode_for(live.size(), n), instrumented, &head_avg));
        if (!m_fired && layer == m_config.prune_layer) {
            m_evicted = fastv_evict(scatter(live, head_avg, n), cache.image_positions(layer), m_config.prune_ratio);
            cache.evict(m_evicted, layer);
            m_fired = true;
        }
    }
    rec.unreachable = cache.unreachable_count();
    return rec;
}

H2OPolicy::H2OPolicy(H2OConfig config) : m_config(config) { m_config.validate(); }

StepRecord H2OPolicy::step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    StepRecord rec = begin_record(cache, ++m_step, Phase::Steady);
    const std::size_t n = cache.num_positions();
    const auto live = cache.live_positions(0);
    Vec layer_mean(live.size(), 0.0);
    for (std::size_t layer = 0; layer < cache.num_layers(); ++layer) {
        Vec head_avg;
        rec.layers.push_back(
            run_layer(cache, exec, layer, live, mode_for(live.size(), n), instrumented, &head_avg));
        for (std::size_t i = 0; i < live.size(); ++i) {
            layer_mean[i] += head_avg[i];
        }
    }
    for (double& w : layer_mean) {
        w /= static_cast<double>(cache.num_layers());
    }
    h2o_update(m_state, live, layer_mean);

    const auto kept = h2o_retain(m_state, m_config.retain_ratio, live, n);
    std::vector<std::size_t> dropped;
    std::set_difference(live.begin(), live.end(), kept.begin(), kept.end(), std::back_inserter(dropped));
    cache.evict(dropped, 0);
    rec.unreachable = cache.unreachable_count();
    return rec;
}

double match_fastv_ratio(std::size_t num_layers, std::size_t prune_layer, std::size_t n_img, std::size_t s_full,
                         std::size_t n_focal, std::size_t s_pruned) {
    if (prune_layer >= num_layers || n_img == 0) {
        return 0.0;
    }
    const double target = static_cast<double>(n_focal) * static_cast<double>(s_full) +
                          static_cast<double>(num_layers - n_focal) * static_cast<double>(s_pruned);
    const double tail_layers = static_cast<double>(num_layers - prune_layer);
    const double tail_context = (target - static_cast<double>(prune_layer) * static_cast<double>(s_full)) / tail_layers;
    const double evicted = static_cast<double>(s_full) - tail_context;
    return std::clamp(evicted / static_cast<double>(n_img), 0.0, 1.0);
}

double match_h2o_ratio(std::size_t num_layers, std::size_t s_full, std::size_t n_focal, std::size_t s_pruned) {
    const double target = static_cast<double>(n_focal) * static_cast<double>(s_full) +
                          static_cast<double>(num_layers - n_focal) * static_cast<double>(s_pruned);
    return std::clamp(target / (2.0 * static_cast<double>(num_layers) * static_cast<double>(s_full)), 0.0, 1.0);
}

}  // namespace fastocr::baseline
