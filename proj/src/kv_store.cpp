// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/kv_store.hpp"

#include <algorithm>
#include <iterator>

namespace fastocr::kv {

KeptSet KeptSet::from_positions(std::vector<std::size_t> positions) {
    std::sort(positions.begin(), positions.end());
    positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
    KeptSet set;
    set.m_positions = std::move(positions);
    return set;
}

KeptSet KeptSet::merge(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    std::vector<std::size_t> out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return from_positions(std::move(out));
}

bool KeptSet::contains(std::size_t position) const {
    return std::binary_search(m_positions.begin(), m_positions.end(), position);
}

SessionCache::SessionCache(std::size_t num_layers, std::size_t hidden_dim)
    : m_hidden_dim(hidden_dim), m_layers(num_layers) {
    if (num_layers == 0 || hidden_dim == 0) {
        throw std::invalid_argument("session cache requires at least one layer and hidden_dim >= 1");
    }
}

void SessionCache::check_layer(std::size_t layer) const {
    if (layer >= m_layers.size()) {
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (num_layers " +
                                std::to_string(m_layers.size()) + ")");
    }
}

std::size_t SessionCache::layer_length(std::size_t layer) const {
    check_layer(layer);
    return m_layers[layer].size();
}

const LayerCache& SessionCache::layer(std::size_t layer) const {
    check_layer(layer);
    return m_layers[layer];
}

std::size_t SessionCache::register_token(TokenType type) {
    m_types.push_back(type);
    m_dead_from.push_back(kAlive);
    return m_types.size() - 1;
}

void SessionCache::append(std::size_t layer, Vec key, Vec value) {
    check_layer(layer);
    if (key.size() != m_hidden_dim || value.size() != m_hidden_dim) {
        throw std::invalid_argument("key/value dimension mismatch: expected " + std::to_string(m_hidden_dim));
    }
    LayerCache& lc = m_layers[layer];
    if (lc.size() >= m_types.size()) {
        throw std::logic_error("append at layer " + std::to_string(layer) + " without a registered position");
    }
    lc.keys.push_back(std::move(key));
    lc.values.push_back(std::move(value));
}

TokenType SessionCache::token_type(std::size_t position) const {
    if (position >= m_types.size()) {
        throw std::out_of_range("position " + std::to_string(position) + " not registered");
    }
    return m_types[position];
}

bool SessionCache::is_live(std::size_t position, std::size_t layer) const {
    return position < m_types.size() && m_dead_from[position] > layer;
}

std::vector<std::size_t> SessionCache::filter(std::size_t layer, bool by_type, TokenType type) const {
    check_layer(layer);
    std::vector<std::size_t> out;
    out.reserve(m_types.size());
    for (std::size_t p = 0; p < m_types.size(); ++p) {
        if (m_dead_from[p] > layer && (!by_type || m_types[p] == type)) {
            out.push_back(p);
        }
    }
    return out;
}

std::vector<std::size_t> SessionCache::live_positions(std::size_t layer) const {
    return filter(layer, false, TokenType::Image);
}

std::vector<std::size_t> SessionCache::image_positions(std::size_t layer) const {
    return filter(layer, true, TokenType::Image);
}

std::vector<std::size_t> SessionCache::text_positions(std::size_t layer) const {
    return filter(layer, true, TokenType::Text);
}

std::vector<std::size_t> SessionCache::live_positions() const { return live_positions(num_layers() - 1); }
std::vector<std::size_t> SessionCache::image_positions() const { return image_positions(num_layers() - 1); }
std::vector<std::size_t> SessionCache::text_positions() const { return text_positions(num_layers() - 1); }
std::size_t SessionCache::num_image_tokens() const { return image_positions().size(); }
std::size_t SessionCache::num_text_tokens() const { return text_positions().size(); }

LayerView SessionCache::full_view(std::size_t layer) const {
    check_layer(layer);
    const LayerCache& lc = m_layers[layer];
    if (lc.size() == 0) {
        throw std::out_of_range("layer " + std::to_string(layer) + " is empty");
    }
    LayerView view;
    view.keys = lc.keys;
    view.values = lc.values;
    for (std::size_t p = 0; p < lc.size(); ++p) {
        if (m_dead_from[p] > layer) {
            view.positions.push_back(p);
        }
    }
    return view;
}

LayerView SessionCache::gathered_view(std::size_t layer, const KeptSet& kept) const {
    check_layer(layer);
    if (kept.empty()) {
        throw std::invalid_argument("empty attention context");
    }
    const LayerCache& lc = m_layers[layer];
    for (std::size_t p : kept.positions()) {
        if (p >= lc.size()) {
            throw std::out_of_range("stale position " + std::to_string(p) + " (layer " + std::to_string(layer) +
                                    " length " + std::to_string(lc.size()) + ")");
        }
        if (m_dead_from[p] <= layer) {
            throw std::out_of_range("position " + std::to_string(p) + " was evicted at layer " +
                                    std::to_string(layer));
        }
    }
    LayerView view;
    view.keys = lc.keys;
    view.values = lc.values;
    view.positions = kept.positions();
    return view;
}

void SessionCache::evict(std::span<const std::size_t> positions, std::size_t from_layer) {
    if (m_eviction_locked) {
        throw ContractViolation("policy contract violation: eviction on an append-only session");
    }
    check_layer(from_layer);
    std::vector<std::size_t> seen;
    for (std::size_t p : positions) {
        if (p >= m_types.size()) {
            throw std::out_of_range("cannot evict unregistered position " + std::to_string(p));
        }
        if (m_dead_from[p] != kAlive || std::find(seen.begin(), seen.end(), p) != seen.end()) {
            throw std::logic_error("position " + std::to_string(p) + " already evicted");
        }
        seen.push_back(p);
    }
    for (std::size_t p : positions) {
        m_dead_from[p] = from_layer;
    }
}

std::size_t SessionCache::unreachable_count() const {
    return static_cast<std::size_t>(
        std::count_if(m_dead_from.begin(), m_dead_from.end(), [](std::size_t d) { return d != kAlive; }));
}

}  // namespace fastocr::kv
