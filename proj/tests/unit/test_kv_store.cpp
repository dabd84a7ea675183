// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fastocr/kv_store.hpp"

namespace fastocr::kv {
namespace {

SessionCache filled_cache(std::size_t layers, std::size_t n_img, std::size_t n_text) {
    SessionCache cache(layers, 2);
    for (std::size_t i = 0; i < n_img + n_text; ++i) {
        cache.register_token(i < n_img ? TokenType::Image : TokenType::Text);
        for (std::size_t l = 0; l < layers; ++l) {
            const double v = static_cast<double>(i);
            cache.append(l, Vec{v, 0.0}, Vec{0.0, v});
        }
    }
    return cache;
}

TEST(KeptSetTest, FromPositionsSortsAndDeduplicates) {
    const KeptSet s = KeptSet::from_positions({5, 1, 3, 1});
    EXPECT_EQ(s.positions(), (std::vector<std::size_t>{1, 3, 5}));
    EXPECT_TRUE(s.contains(3));
    EXPECT_FALSE(s.contains(2));
}

TEST(KeptSetTest, MergeIsUnion) {
    const std::vector<std::size_t> a{0, 2, 4};
    const std::vector<std::size_t> b{1, 2, 7};
    EXPECT_EQ(KeptSet::merge(a, b).positions(), (std::vector<std::size_t>{0, 1, 2, 4, 7}));
    EXPECT_EQ(KeptSet::merge(a, {}).positions(), a);
}

TEST(SessionCacheTest, RegistrationPartitionsTokens) {
    SessionCache cache = filled_cache(3, 4, 2);
    EXPECT_EQ(cache.num_positions(), 6u);
    EXPECT_EQ(cache.num_image_tokens(), 4u);
    EXPECT_EQ(cache.num_text_tokens(), 2u);
    EXPECT_EQ(cache.image_positions(), (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(cache.text_positions(), (std::vector<std::size_t>{4, 5}));
    EXPECT_EQ(cache.layer_length(2), 6u);
}

TEST(SessionCacheTest, AppendRequiresPendingPosition) {
    SessionCache cache(2, 2);
    EXPECT_THROW(cache.append(0, Vec{0.0, 0.0}, Vec{0.0, 0.0}), std::logic_error);
    cache.register_token(TokenType::Text);
    cache.append(0, Vec{0.0, 0.0}, Vec{0.0, 0.0});
    EXPECT_THROW(cache.append(0, Vec{0.0, 0.0}, Vec{0.0, 0.0}), std::logic_error);
    EXPECT_THROW(cache.append(1, Vec{0.0}, Vec{0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(cache.append(2, Vec{0.0, 0.0}, Vec{0.0, 0.0}), std::out_of_range);
}

TEST(SessionCacheTest, PendingPositionsAreListedButNotViewable) {
    SessionCache cache = filled_cache(2, 2, 1);
    cache.register_token(TokenType::Text);
    EXPECT_EQ(cache.live_positions(0).size(), 4u);
    EXPECT_EQ(cache.full_view(0).size(), 3u);
    EXPECT_THROW(cache.gathered_view(0, KeptSet::from_positions({3})), std::out_of_range);
}

TEST(SessionCacheTest, GatheredViewExposesKeptRows) {
    SessionCache cache = filled_cache(1, 3, 2);
    const LayerView view = cache.gathered_view(0, KeptSet::from_positions({1, 4}));
    ASSERT_EQ(view.size(), 2u);
    EXPECT_EQ(view.key_at(0), (Vec{1.0, 0.0}));
    EXPECT_EQ(view.value_at(1), (Vec{0.0, 4.0}));
    EXPECT_THROW(cache.gathered_view(0, KeptSet{}), std::invalid_argument);
}

TEST(SessionCacheTest, EvictionTombstonesFromLayerOnward) {
    SessionCache cache = filled_cache(4, 4, 2);
    const std::vector<std::size_t> victims{1, 3};
    cache.evict(victims, 2);
    EXPECT_TRUE(cache.is_live(1, 1));
    EXPECT_FALSE(cache.is_live(1, 2));
    EXPECT_FALSE(cache.is_live(3, 3));
    EXPECT_EQ(cache.image_positions(1), (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(cache.image_positions(2), (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(cache.full_view(3).positions, (std::vector<std::size_t>{0, 2, 4, 5}));
    EXPECT_EQ(cache.unreachable_count(), 2u);
    EXPECT_EQ(cache.layer_length(3), 6u);
    EXPECT_THROW(cache.gathered_view(2, KeptSet::from_positions({1})), std::out_of_range);
    EXPECT_NO_THROW(cache.gathered_view(1, KeptSet::from_positions({1})));
}

TEST(SessionCacheTest, EvictionErrorsLeaveCacheUntouched) {
    SessionCache cache = filled_cache(2, 3, 1);
    EXPECT_THROW(cache.evict(std::vector<std::size_t>{0, 9}), std::out_of_range);
    EXPECT_EQ(cache.unreachable_count(), 0u);
    EXPECT_THROW(cache.evict(std::vector<std::size_t>{1, 1}), std::logic_error);
    EXPECT_EQ(cache.unreachable_count(), 0u);
    cache.evict(std::vector<std::size_t>{1});
    EXPECT_THROW(cache.evict(std::vector<std::size_t>{1}), std::logic_error);
}

TEST(SessionCacheTest, LockedSessionRejectsEviction) {
    SessionCache cache = filled_cache(2, 3, 1);
    cache.lock_eviction();
    EXPECT_TRUE(cache.eviction_locked());
    try {
        cache.evict(std::vector<std::size_t>{0});
        FAIL() << "eviction on a locked session must throw";
    } catch (const ContractViolation& e) {
        EXPECT_NE(std::string(e.what()).find("policy contract violation"), std::string::npos);
    }
    EXPECT_EQ(cache.unreachable_count(), 0u);
}

TEST(SessionCacheTest, ConstructorValidates) {
    EXPECT_THROW(SessionCache(0, 4), std::invalid_argument);
    EXPECT_THROW(SessionCache(2, 0), std::invalid_argument);
    SessionCache cache(2, 2);
    EXPECT_THROW(cache.full_view(0), std::out_of_range);
    EXPECT_THROW(cache.token_type(0), std::out_of_range);
}

}  // namespace
}  // namespace fastocr::kv
