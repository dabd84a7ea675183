// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastocr/attention.hpp"

namespace fastocr::kv {

enum class TokenType { Image, Text };

/// Raised when an append-only session attempts a physical eviction.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/**
 * @brief Ascending, duplicate-free set of cache positions a layer attends over.
 */
class KeptSet {
public:
    KeptSet() = default;

    /// Sorts and deduplicates.
    static KeptSet from_positions(std::vector<std::size_t> positions);

    /// Union of two ascending position lists.
    static KeptSet merge(std::span<const std::size_t> a, std::span<const std::size_t> b);

    const std::vector<std::size_t>& positions() const { return m_positions; }
    std::size_t size() const { return m_positions.size(); }
    bool empty() const { return m_positions.empty(); }
    bool contains(std::size_t position) const;

    bool operator==(const KeptSet&) const = default;

private:
    std::vector<std::size_t> m_positions;
};

/// Key/value rows of one layer, indexed by cache position.
struct LayerCache {
    std::vector<Vec> keys;
    std::vector<Vec> values;

    std::size_t size() const { return keys.size(); }
};

/**
 * @brief A read-only window onto one layer: `positions` index into `keys`/`values`, ascending.
 */
struct LayerView {
    std::vector<std::size_t> positions;
    std::span<const Vec> keys;
    std::span<const Vec> values;

    std::size_t size() const { return positions.size(); }
    const Vec& key_at(std::size_t i) const { return keys[positions[i]]; }
    const Vec& value_at(std::size_t i) const { return values[positions[i]]; }
};

/**
 * @brief Per-layer KV store for one decode session with a layer-independent image/text token partition.
 *
 * Positions are registered once (register_token) and then appended at every layer. Eviction tombstones a
 * position from a given layer onward; indices stay stable. Sessions that lock eviction are strictly
 * append-only and any evict() call raises ContractViolation.
 */
class SessionCache {
public:
    static constexpr std::size_t kAlive = std::numeric_limits<std::size_t>::max();

    SessionCache(std::size_t num_layers, std::size_t hidden_dim);

    std::size_t num_layers() const { return m_layers.size(); }
    std::size_t hidden_dim() const { return m_hidden_dim; }

    /// Number of registered positions, live or dead.
    std::size_t num_positions() const { return m_types.size(); }
    std::size_t layer_length(std::size_t layer) const;

    std::size_t register_token(TokenType type);
    void append(std::size_t layer, Vec key, Vec value);

    TokenType token_type(std::size_t position) const;
    bool is_live(std::size_t position, std::size_t layer) const;

    /// Registered positions reachable at `layer`, including ones whose KV is not yet appended.
    std::vector<std::size_t> live_positions(std::size_t layer) const;
    std::vector<std::size_t> image_positions(std::size_t layer) const;
    std::vector<std::size_t> text_positions(std::size_t layer) const;

    /// Layer-independent shorthands: positions never evicted at any layer.
    std::vector<std::size_t> live_positions() const;
    std::vector<std::size_t> image_positions() const;
    std::vector<std::size_t> text_positions() const;
    std::size_t num_image_tokens() const;
    std::size_t num_text_tokens() const;

    LayerView full_view(std::size_t layer) const;
    LayerView gathered_view(std::size_t layer, const KeptSet& kept) const;

    /// Permanently removes positions from every layer >= from_layer.
    void evict(std::span<const std::size_t> positions, std::size_t from_layer = 0);

    /// Makes the session append-only; evict() throws from now on.
    void lock_eviction() { m_eviction_locked = true; }
    bool eviction_locked() const { return m_eviction_locked; }

    /// Positions evicted from at least one layer.
    std::size_t unreachable_count() const;

    const LayerCache& layer(std::size_t layer) const;

private:
    void check_layer(std::size_t layer) const;
    std::vector<std::size_t> filter(std::size_t layer, bool by_type, TokenType type) const;

    std::size_t m_hidden_dim;
    std::vector<LayerCache> m_layers;
    std::vector<TokenType> m_types;
    std::vector<std::size_t> m_dead_from;  // first layer at which the position is unreachable
    bool m_eviction_locked = false;
};

}  // namespace fastocr::kv
