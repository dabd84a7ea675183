// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/fixation_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fastocr::fixation {

namespace {

constexpr double kRoundingSlack = 1e-9;

void check_ratio(double value, const char* name) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
    }
}

}  // namespace

void FixationConfig::validate() const {
    check_ratio(focal_layer_ratio, "focal_layer_ratio");
    check_ratio(kept_token_ratio, "kept_token_ratio");
}

std::vector<double> WarmupStats::mean_ratios() const {
    std::vector<double> means(ratios.size(), 0.0);
    for (std::size_t l = 0; l < ratios.size(); ++l) {
        if (ratios[l].empty()) {
            throw std::logic_error("no warmup ratios recorded for layer " + std::to_string(l));
        }
        means[l] = std::accumulate(ratios[l].begin(), ratios[l].end(), 0.0) /
                   static_cast<double>(ratios[l].size());
    }
    return means;
}

bool FocalSet::contains(std::size_t layer) const {
    return std::binary_search(layers.begin(), layers.end(), layer);
}

std::optional<std::size_t> FocalSet::deepest() const {
    if (layers.empty()) {
        return std::nullopt;
    }
    return layers.back();
}

std::size_t focal_budget(double focal_layer_ratio, std::size_t num_layers) {
    check_ratio(focal_layer_ratio, "focal_layer_ratio");
    return static_cast<std::size_t>(std::floor(focal_layer_ratio * static_cast<double>(num_layers) + kRoundingSlack));
}

std::size_t focal_token_count(double kept_token_ratio, std::size_t n_img) {
    check_ratio(kept_token_ratio, "kept_token_ratio");
    const double raw = std::ceil(kept_token_ratio * static_cast<double>(n_img) - kRoundingSlack);
    return std::min(static_cast<std::size_t>(std::max(raw, 0.0)), n_img);
}

double image_attention_ratio(std::span<const double> head_avg,
                             std::span<const std::size_t> image_idx,
                             std::span<const std::size_t> text_idx) {
    double image_mass = 0.0;
    double text_mass = 0.0;
    for (std::size_t i : image_idx) {
        image_mass += head_avg[i];
    }
    for (std::size_t i : text_idx) {
        text_mass += head_avg[i];
    }
    if (image_mass + text_mass <= 0.0) {
        throw std::domain_error("degenerate attention");
    }
    return image_mass / (image_mass + text_mass);
}

void record_warmup(PolicyState& state, std::size_t layer, double ratio) {
    if (state.phase() != Phase::Warmup) {
        throw std::logic_error("record_warmup called outside the warmup phase");
    }
    if (layer >= state.num_layers) {
        throw std::out_of_range("warmup layer out of range");
    }
    check_ratio(ratio, "image attention ratio");
    if (state.warmup.ratios.size() != state.num_layers) {
        state.warmup.ratios.resize(state.num_layers);
    }
    state.warmup.ratios[layer].push_back(ratio);
}

FocalSet select_focal_layers(std::span<const double> mean_ratios, double rho, std::size_t gap,
                             std::size_t num_layers) {
    if (mean_ratios.size() != num_layers) {
        throw std::invalid_argument("mean_ratios must have one entry per layer");
    }
    const std::size_t budget = focal_budget(rho, num_layers);
    if (budget == 0 && rho > 0.0) {
        throw std::invalid_argument("focal budget rounds to zero");
    }

    std::vector<std::size_t> order(num_layers);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return mean_ratios[a] > mean_ratios[b]; });

    FocalSet set;
    for (std::size_t layer : order) {
        if (set.layers.size() >= budget) {
            break;
        }
        const bool spaced = std::all_of(set.layers.begin(), set.layers.end(), [&](std::size_t chosen) {
            const std::size_t dist = layer > chosen ? layer - chosen : chosen - layer;
            return dist > gap;
        });
        if (spaced) {
            set.layers.push_back(layer);
        }
    }
    std::sort(set.layers.begin(), set.layers.end());
    set.frozen = true;
    return set;
}

FocalTokens select_focal_tokens(std::span<const double> dense_weights,
                                std::span<const std::size_t> image_positions, double kappa) {
    const std::size_t k = focal_token_count(kappa, image_positions.size());
    std::vector<std::size_t> ranked(image_positions.begin(), image_positions.end());
    for (std::size_t p : ranked) {
        if (p >= dense_weights.size()) {
            throw std::out_of_range("image position " + std::to_string(p) + " has no attention weight");
        }
    }
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (dense_weights[a] != dense_weights[b]) {
                              return dense_weights[a] > dense_weights[b];
                          }
                          return a < b;
                      });
    ranked.resize(k);
    std::sort(ranked.begin(), ranked.end());
    FocalTokens tokens;
    tokens.positions = std::move(ranked);
    return tokens;
}

LayerZeroInit init_step_kept_set(const PolicyState& state, std::span<const std::size_t> text_positions,
                                 std::span<const std::size_t> image_positions,
                                 const std::function<Vec()>& layer0_attend) {
    LayerZeroInit init;
    if (state.focal_set.contains(0)) {
        init.source = LayerZeroSource::FocalBranch;
        return init;
    }
    if (state.f_last.has_value()) {
        init.source = LayerZeroSource::Inherited;
        init.tokens = *state.f_last;
    } else {
        init.source = LayerZeroSource::Fallback;
        const Vec dense = layer0_attend();
        init.tokens = select_focal_tokens(dense, image_positions, state.config.kept_token_ratio);
        init.tokens->source_layer = 0;
        init.tokens->step = state.step;
    }
    init.kept = kv::KeptSet::merge(text_positions, init.tokens->positions);
    return init;
}

FixationPolicy::FixationPolicy(FixationConfig config, std::size_t num_layers) {
    config.validate();
    if (num_layers == 0) {
        throw std::invalid_argument("fixation policy needs at least one layer");
    }
    if (config.forced_focal_layers) {
        for (std::size_t l : *config.forced_focal_layers) {
            if (l >= num_layers) {
                throw std::invalid_argument("forced focal layer " + std::to_string(l) + " out of range");
            }
        }
    } else if (config.focal_layer_ratio > 0.0 && focal_budget(config.focal_layer_ratio, num_layers) == 0) {
        throw std::invalid_argument("focal budget rounds to zero");
    }
    m_state.config = std::move(config);
    m_state.num_layers = num_layers;
    m_state.warmup.ratios.resize(num_layers);
}

void FixationPolicy::on_session_start(kv::SessionCache& cache) {
    if (cache.num_layers() != m_state.num_layers) {
        throw std::invalid_argument("cache layer count does not match the policy");
    }
    cache.lock_eviction();
}

void FixationPolicy::observe_prefill(std::span<const double> per_layer_ratio) {
    m_state.prefill_ratios.assign(per_layer_ratio.begin(), per_layer_ratio.end());
}

void FixationPolicy::select_layers() {
    const FixationConfig& cfg = m_state.config;
    if (cfg.forced_focal_layers) {
        FocalSet set;
        set.layers = *cfg.forced_focal_layers;
        std::sort(set.layers.begin(), set.layers.end());
        set.layers.erase(std::unique(set.layers.begin(), set.layers.end()), set.layers.end());
        set.frozen = true;
        m_state.focal_set = std::move(set);
        return;
    }
    std::vector<double> means;
    if (cfg.warmup_steps == 0) {
        if (m_state.prefill_ratios.size() != m_state.num_layers) {
            throw std::runtime_error("insufficient warmup data");
        }
        means = m_state.prefill_ratios;
    } else {
        means = m_state.warmup.mean_ratios();
    }
    m_state.focal_set = select_focal_layers(means, cfg.focal_layer_ratio, cfg.focal_gap, m_state.num_layers);
}

StepRecord FixationPolicy::step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    if (cache.num_layers() != m_state.num_layers) {
        throw std::invalid_argument("cache layer count does not match the policy");
    }
    ++m_state.step;
    if (m_state.phase() == Phase::Warmup) {
        return warmup_step(cache, exec, instrumented);
    }
    if (!m_state.focal_set.frozen) {
        select_layers();  // only reached when warmup_steps == 0
    }
    return steady_step(cache, exec, instrumented);
}

StepRecord FixationPolicy::warmup_step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    StepRecord rec = begin_record(cache, m_state.step, Phase::Warmup);
    for (std::size_t layer = 0; layer < m_state.num_layers; ++layer) {
        const auto all = cache.live_positions(layer);
        LayerRecord lr = run_layer(cache, exec, layer, all, AttentionMode::Full, instrumented);
        record_warmup(m_state, layer, lr.image_ratio);
        rec.layers.push_back(std::move(lr));
    }
    if (m_state.step == m_state.config.warmup_steps) {
        select_layers();
    }
    rec.focal_layers = m_state.focal_set.layers;
    return rec;
}

StepRecord FixationPolicy::steady_step(kv::SessionCache& cache, LayerExecutor& exec, bool instrumented) {
    StepRecord rec = begin_record(cache, m_state.step, Phase::Steady);
    rec.focal_layers = m_state.focal_set.layers;

    const auto all = cache.live_positions();
    const auto text = cache.text_positions();
    const auto image = cache.image_positions();
    const std::size_t n = cache.num_positions();
    const double kappa = m_state.config.kept_token_ratio;

    std::optional<LayerRecord> layer0_record;
    auto layer0_attend = [&]() {
        Vec head_avg;
        layer0_record = run_layer(cache, exec, 0, all, AttentionMode::Full, instrumented, &head_avg);
        return scatter(all, head_avg, n);
    };
    const LayerZeroInit init = init_step_kept_set(m_state, text, image, layer0_attend);

    kv::KeptSet kept = init.kept;
    std::optional<FocalTokens> deepest_tokens;
    const auto deepest_layer = m_state.focal_set.deepest();

    for (std::size_t layer = 0; layer < m_state.num_layers; ++layer) {
        LayerRecord lr;
        if (m_state.focal_set.contains(layer)) {
            Vec head_avg;
            lr = run_layer(cache, exec, layer, all, AttentionMode::Full, instrumented, &head_avg);
            FocalTokens tokens = select_focal_tokens(scatter(all, head_avg, n), image, kappa);
            tokens.source_layer = layer;
            tokens.step = m_state.step;
            kept = kv::KeptSet::merge(text, tokens.positions);
            lr.focal_tokens = tokens.positions;
            if (deepest_layer && layer == *deepest_layer) {
                deepest_tokens = std::move(tokens);
            }
        } else if (layer == 0 && init.source == LayerZeroSource::Fallback) {
            lr = std::move(*layer0_record);
            lr.focal_tokens = init.tokens->positions;
        } else {
            lr = run_layer(cache, exec, layer, kept.positions(), AttentionMode::Gathered, instrumented);
            if (layer == 0) {
                lr.focal_tokens = init.tokens->positions;
                lr.inherited = true;
            }
        }
        rec.layers.push_back(std::move(lr));
    }

    if (deepest_tokens) {
        m_state.f_last = std::move(deepest_tokens);
    } else if (init.tokens) {
        // Empty focal set: the layer-0 selection is carried unchanged.
        m_state.f_last = init.tokens;
    }
    if (m_state.f_last) {
        rec.f_last = m_state.f_last->positions;
    }
    return rec;
}

}  // namespace fastocr::fixation
