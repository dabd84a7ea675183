// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fastocr/baselines.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::baseline {
namespace {

trace::TraceFile small_trace(std::size_t steps) {
    trace::PlantedConfig pc;
    pc.num_layers = 6;
    pc.num_image_tokens = 40;
    pc.num_text_tokens = 4;
    pc.focal_like_layers = {1, 4};
    pc.noise = 0.05;
    pc.num_steps = steps;
    pc.seed = 9;
    return trace::to_trace_file(trace::generate_trace(pc));
}

TEST(FastVEvictTest, LowestWeightsTiesEvictHigherPosition) {
    const Vec w{0.2, 0.1, 0.1, 0.3, 0.1, 0.2};
    const std::vector<std::size_t> img{0, 1, 2, 3, 4};
    // floor(0.5 * 5) = 2 victims among the three 0.1 entries: the higher positions go first.
    EXPECT_EQ(fastv_evict(w, img, 0.5), (std::vector<std::size_t>{2, 4}));
    EXPECT_TRUE(fastv_evict(w, img, 0.0).empty());
    EXPECT_EQ(fastv_evict(w, img, 1.0), img);
    EXPECT_THROW(fastv_evict(w, img, 1.1), std::invalid_argument);
}

TEST(H2OTest, RetainsHeavyHittersAndRecentWindow) {
    HeavyHitterState state;
    const std::vector<std::size_t> live{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    h2o_update(state, live, Vec{0.3, 0.0, 0.25, 0.0, 0.0, 0.0, 0.0, 0.05, 0.2, 0.2});
    // ceil(0.2 * 10) = 2 heavy hitters {0, 2} and the 2 most recent {8, 9}.
    EXPECT_EQ(h2o_retain(state, 0.2, live, 10), (std::vector<std::size_t>{0, 2, 8, 9}));
    // Overlapping parts are deduplicated.
    h2o_update(state, live, Vec{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5});
    EXPECT_EQ(h2o_retain(state, 0.2, live, 10), (std::vector<std::size_t>{8, 9}));
    EXPECT_EQ(h2o_retain(state, 1.0, live, 10), live);
    EXPECT_THROW(h2o_update(state, live, Vec{1.0}), std::invalid_argument);
}

TEST(H2OTest, ScoreTiesGoToLowerPosition) {
    HeavyHitterState state;
    const std::vector<std::size_t> live{0, 1, 2, 3, 4, 5};
    EXPECT_EQ(h2o_retain(state, 0.2, live, 6), (std::vector<std::size_t>{0, 1, 4, 5}));
}

TEST(VanillaPolicyTest, LocksEvictionAndAttendsEverything) {
    VanillaPolicy policy;
    const auto records = trace::replay(small_trace(3), policy);
    for (const auto& rec : records) {
        for (const auto& lr : rec.layers) {
            EXPECT_EQ(lr.mode, AttentionMode::Full);
            EXPECT_EQ(lr.attended.size(), rec.num_positions);
        }
        EXPECT_EQ(rec.unreachable, 0u);
    }
    kv::SessionCache cache(2, 1);
    policy.on_session_start(cache);
    EXPECT_TRUE(cache.eviction_locked());
}

TEST(FastVPolicyTest, EvictsOnceFromPruneLayerOnward) {
    FastVPolicy policy(FastVConfig{2, 0.5}, 6);
    const auto records = trace::replay(small_trace(4), policy);
    EXPECT_EQ(policy.evicted().size(), 20u);
    for (const auto& rec : records) {
        for (std::size_t l = 0; l < 6; ++l) {
            const std::size_t expected = l < 2 || (rec.step == 1 && l == 2) ? rec.num_positions
                                                                              : rec.num_positions - 20;
            EXPECT_EQ(rec.layers[l].attended.size(), expected) << "step " << rec.step << " layer " << l;
        }
        EXPECT_EQ(rec.unreachable, 20u);
    }
}

TEST(FastVPolicyTest, RejectsBadConfig) {
    EXPECT_THROW(FastVPolicy(FastVConfig{6, 0.5}, 6), std::invalid_argument);
    EXPECT_THROW(FastVPolicy(FastVConfig{2, -0.5}, 6), std::invalid_argument);
}

TEST(H2OPolicyTest, LiveContextNeverGrowsBeyondAppends) {
    H2OPolicy policy(H2OConfig{0.1});
    const auto records = trace::replay(small_trace(12), policy);
    std::size_t prev = 0;
    for (const auto& rec : records) {
        const std::size_t attended = rec.layers[0].attended.size();
        if (prev != 0) {
            EXPECT_LE(attended, prev + 1);
        }
        for (const auto& lr : rec.layers) {
            EXPECT_EQ(lr.attended, rec.layers[0].attended);
        }
        prev = attended;
    }
    // At most 2 * ceil(0.1 * s) positions survive each retention.
    EXPECT_LE(records.back().layers[0].attended.size(), 2u * 6u + 1u);
}

TEST(BudgetMatchTest, FastVRatioEqualizesFlops) {
    const std::size_t L = 8;
    const std::size_t K = 2;
    const std::size_t n_img = 64;
    const std::size_t s_full = 100;
    const std::size_t n_focal = 1;
    const std::size_t s_pruned = 80;
    const double r = match_fastv_ratio(L, K, n_img, s_full, n_focal, s_pruned);
    const double tail = static_cast<double>(s_full) - r * static_cast<double>(n_img);
    const double fastv_ctx = K * static_cast<double>(s_full) + (L - K) * tail;
    const double target = n_focal * static_cast<double>(s_full) + (L - n_focal) * static_cast<double>(s_pruned);
    EXPECT_NEAR(fastv_ctx, target, 1e-9);
    EXPECT_DOUBLE_EQ(match_fastv_ratio(L, K, n_img, s_full, L, s_pruned), 0.0);
    EXPECT_DOUBLE_EQ(match_fastv_ratio(L, K, n_img, s_full, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(match_fastv_ratio(L, L, n_img, s_full, 1, 40), 0.0);
}

TEST(BudgetMatchTest, H2ORatioTargetsTwiceRatioContext) {
    const double r = match_h2o_ratio(8, 100, 1, 40);
    EXPECT_NEAR(2.0 * r * 100.0 * 8.0, 100.0 + 7.0 * 40.0, 1e-9);
    EXPECT_DOUBLE_EQ(match_h2o_ratio(8, 100, 8, 100), 0.5);
}

}  // namespace
}  // namespace fastocr::baseline
