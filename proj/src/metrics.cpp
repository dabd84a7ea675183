// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/metrics.hpp"

#include <algorithm>
#include <iterator>
#include <stdexcept>

namespace fastocr::metrics {

double prefix_agreement(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) {
        return 1.0;
    }
    const std::size_t shortest = std::min(a.size(), b.size());
    std::size_t lcp = 0;
    while (lcp < shortest && a[lcp] == b[lcp]) {
        ++lcp;
    }
    return static_cast<double>(lcp) / static_cast<double>(longest);
}

double token_match_rate(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) {
        return 1.0;
    }
    const std::size_t shortest = std::min(a.size(), b.size());
    std::size_t matches = 0;
    for (std::size_t i = 0; i < shortest; ++i) {
        matches += a[i] == b[i] ? 1 : 0;
    }
    return static_cast<double>(matches) / static_cast<double>(longest);
}

double attention_mass_recall(std::span<const double> full_head_avg, std::span<const std::size_t> kept_image_positions,
                             std::span<const std::size_t> image_positions) {
    auto mass = [&](std::span<const std::size_t> positions) {
        double m = 0.0;
        for (std::size_t p : positions) {
            if (p >= full_head_avg.size()) {
                throw std::out_of_range("recall: position beyond the oracle weights");
            }
            m += full_head_avg[p];
        }
        return m;
    };
    const double total = mass(image_positions);
    if (total <= 0.0) {
        return 1.0;
    }
    return std::clamp(mass(kept_image_positions) / total, 0.0, 1.0);
}

double kept_set_jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::vector<std::size_t> sa(a.begin(), a.end());
    std::vector<std::size_t> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
    sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
    if (sa.empty() && sb.empty()) {
        return 1.0;
    }
    std::vector<std::size_t> both;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
    const std::size_t uni = sa.size() + sb.size() - both.size();
    return static_cast<double>(both.size()) / static_cast<double>(uni);
}

FocalFrequency focal_layer_frequency(std::span<const std::vector<std::size_t>> focal_sets, std::size_t num_layers) {
    if (focal_sets.empty()) {
        throw std::invalid_argument("focal_layer_frequency needs at least one run");
    }
    FocalFrequency out;
    out.per_layer.assign(num_layers, 0.0);
    out.runs = focal_sets.size();
    double size_sum = 0.0;
    for (const auto& set : focal_sets) {
        size_sum += static_cast<double>(set.size());
        for (std::size_t l : set) {
            if (l >= num_layers) {
                throw std::out_of_range("focal layer beyond the layer count");
            }
            out.per_layer[l] += 1.0;
        }
    }
    for (double& f : out.per_layer) {
        f /= static_cast<double>(out.runs);
    }
    out.mean_size = size_sum / static_cast<double>(out.runs);
    return out;
}

void Accumulator::add(double value) {
    if (count == 0) {
        min = max = value;
    } else {
        min = std::min(min, value);
        max = std::max(max, value);
    }
    sum += value;
    ++count;
}

void Accumulator::merge(const Accumulator& other) {
    if (other.count == 0) {
        return;
    }
    if (count == 0) {
        *this = other;
        return;
    }
    min = std::min(min, other.min);
    max = std::max(max, other.max);
    sum += other.sum;
    count += other.count;
}

std::vector<std::size_t> kept_image_positions(const StepRecord& step, const LayerRecord& layer) {
    std::vector<std::size_t> out;
    std::set_intersection(layer.attended.begin(), layer.attended.end(), step.image_positions.begin(),
                          step.image_positions.end(), std::back_inserter(out));
    return out;
}

AttentionSummary summarize_attention(std::span<const StepRecord> records) {
    AttentionSummary out;
    const std::vector<std::size_t>* previous_carry = nullptr;
    for (const StepRecord& rec : records) {
        for (const LayerRecord& lr : rec.layers) {
            out.image_ratio.add(lr.image_ratio);
            if (!lr.oracle_weights) {
                continue;
            }
            out.has_oracle = true;
            if (lr.mode == AttentionMode::Gathered) {
                const double r = attention_mass_recall(*lr.oracle_weights, kept_image_positions(rec, lr),
                                                       rec.image_positions);
                out.gathered_recall.add(r);
                if (lr.inherited) {
                    out.inherited_recall.add(r);
                }
            } else if (lr.focal_tokens) {
                out.focal_recall.add(
                    attention_mass_recall(*lr.oracle_weights, *lr.focal_tokens, rec.image_positions));
            }
        }
        if (rec.phase == Phase::Steady && rec.f_last) {
            if (previous_carry != nullptr) {
                out.carried_jaccard.add(kept_set_jaccard(*previous_carry, *rec.f_last));
            }
            previous_carry = &*rec.f_last;
        }
    }
    return out;
}

}  // namespace fastocr::metrics
