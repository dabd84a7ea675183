// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "fastocr/fixation_policy.hpp"
#include "fastocr/flops.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::flops {
namespace {

TEST(AttentionFlopsTest, GoldenValues) {
    EXPECT_EQ(attention_flops({8, 36, 2048, 4096}), 19'327'352'832u);
    EXPECT_EQ(format_giga(attention_flops({8, 36, 2048, 4096})), "19.33");
    EXPECT_EQ(format_giga(attention_flops({12, 36, 2048, 4096})), "28.99");
    EXPECT_EQ(format_giga(attention_flops({4, 36, 2048, 8192})), "14.50");
    EXPECT_EQ(attention_flops({0, 36, 2048, 4096}), 0u);
    EXPECT_EQ(attention_flops({1, 1, 1, 1}), 12u);
}

TEST(AttentionFlopsTest, FormatGigaRoundsHalfUp) {
    EXPECT_EQ(format_giga(0), "0.00");
    EXPECT_EQ(format_giga(4'999'999), "0.00");
    EXPECT_EQ(format_giga(5'000'000), "0.01");
    EXPECT_EQ(format_giga(1'994'999'999), "1.99");
    EXPECT_EQ(format_giga(1'995'000'000), "2.00");
}

TEST(AttentionFlopsTest, ScalingLaws) {
    const FlopsConfig base{3, 5, 64, 100};
    const Flops f = attention_flops(base);
    EXPECT_EQ(attention_flops({6, 5, 64, 100}), 2 * f);
    EXPECT_EQ(attention_flops({3, 10, 64, 100}), 2 * f);
    // Affine in s: equal increments for equal steps.
    EXPECT_EQ(attention_flops({3, 5, 64, 200}) - f, attention_flops({3, 5, 64, 300}) - attention_flops({3, 5, 64, 200}));
    // Quadratic plus linear in h: f(2h) = 4 * 8h^2 + 2 * 4hs per layer and batch.
    const Flops per = 8 * 64 * 64;
    const Flops att = 4 * 64 * 100;
    EXPECT_EQ(attention_flops({3, 5, 128, 100}), 15 * (4 * per + 2 * att));
}

TEST(AttentionFlopsTest, OverflowThrows) {
    const std::uint64_t big = std::numeric_limits<std::uint64_t>::max() / 2;
    EXPECT_THROW(attention_flops({big, 36, 2048, 4096}), std::overflow_error);
    EXPECT_THROW(layer_flops(std::uint64_t{1} << 32, 1), std::overflow_error);
}

TEST(FastOcrFlopsTest, DegenerateSplits) {
    const Flops vanilla = attention_flops({8, 36, 2048, 4096});
    EXPECT_EQ(fastocr_flops(8, 36, 2048, 4096, 36, 100).total, vanilla);
    EXPECT_EQ(fastocr_flops(8, 36, 2048, 4096, 3, 4096).total, vanilla);
    EXPECT_EQ(fastocr_flops(8, 36, 2048, 4096, 0, 4096).total, vanilla);
    EXPECT_THROW(fastocr_flops(8, 36, 2048, 4096, 37, 100), std::invalid_argument);
    EXPECT_THROW(fastocr_flops(8, 36, 2048, 4096, 3, 5000), std::invalid_argument);
}

TEST(FastOcrFlopsTest, BreakdownSeparatesTerms) {
    const auto bd = fastocr_flops(2, 4, 10, 50, 1, 20);
    EXPECT_EQ(bd.projection_flops, 2u * 4u * 800u);
    EXPECT_EQ(bd.attention_flops, 2u * (40u * 50u + 3u * 40u * 20u));
    EXPECT_EQ(bd.total, bd.projection_flops + bd.attention_flops);
    EXPECT_EQ(bd.per_layer_context, (std::vector<std::uint64_t>{50, 20, 20, 20}));
}

TEST(FastOcrFlopsTest, ReportedFiguresFromRecoveredSplit) {
    // 3 focal layers of 36 (rho = 0.1), 3955 image and 128 text positions.
    EXPECT_EQ(fixation::focal_budget(0.1, 36), 3u);
    const std::uint64_t s25 = 128 + fixation::focal_token_count(0.25, 3955);
    const std::uint64_t s05 = 128 + fixation::focal_token_count(0.05, 3955);
    EXPECT_EQ(s25, 1117u);
    EXPECT_EQ(s05, 326u);
    EXPECT_EQ(format_giga(fastocr_flops(8, 36, 2048, 4096, 3, s25).total), "12.88");
    EXPECT_EQ(format_giga(fastocr_flops(8, 36, 2048, 4096, 3, s05).total), "11.17");
}

TEST(FastOcrFlopsTest, EnumerationOracleAdmitsRecoveredSplit) {
    // Every integer (N_img, |T|) with N_img + |T| <= 4096 whose kappa = 0.25 and kappa = 0.05 runs both round to
    // the reported figures.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> solutions;
    for (std::uint64_t n = 1; n <= 4096; ++n) {
        const std::uint64_t k25 = fixation::focal_token_count(0.25, n);
        const std::uint64_t k05 = fixation::focal_token_count(0.05, n);
        for (std::uint64_t t = 0; n + t <= 4096; ++t) {
            if (format_giga(fastocr_flops(8, 36, 2048, 4096, 3, t + k05).total) != "11.17") {
                if (t + k05 > 400) {
                    break;
                }
                continue;
            }
            if (format_giga(fastocr_flops(8, 36, 2048, 4096, 3, t + k25).total) == "12.88") {
                solutions.emplace_back(n, t);
            }
        }
    }
    ASSERT_FALSE(solutions.empty());
    EXPECT_NE(std::find(solutions.begin(), solutions.end(), std::make_pair(std::uint64_t{3955}, std::uint64_t{128})),
              solutions.end());
    for (const auto& [n, t] : solutions) {
        // The pair of figures pins N_img to within a few dozen tokens of 3955.
        EXPECT_NEAR(static_cast<double>(n), 3955.0, 40.0) << n << "," << t;
    }
}

TEST(FastOcrFlopsTest, SolvePrunedContextInvertsComposition) {
    const auto bd = fastocr_flops(8, 36, 2048, 4096, 3, 326);
    EXPECT_NEAR(solve_pruned_context(8, 36, 2048, 4096, 3, static_cast<double>(bd.total)), 326.0, 1e-9);
    const double s = solve_pruned_context(8, 36, 2048, 4096, 3, 11.17e9);
    EXPECT_GT(s, 321.0);
    EXPECT_LT(s, 327.0);
    EXPECT_THROW(solve_pruned_context(8, 36, 2048, 4096, 36, 1e9), std::invalid_argument);
}

TEST(MeasuredTest, FromRecordsAndOrdering) {
    trace::PlantedConfig pc;
    pc.num_steps = 14;
    pc.noise = 0.02;
    fixation::FixationConfig fc;
    fc.focal_layer_ratio = 0.3;
    fixation::FixationPolicy policy(fc, 10);
    const auto records = trace::replay(trace::to_trace_file(trace::generate_trace(pc)), policy);
    const auto measured = measured_breakdown(records, 64);
    ASSERT_EQ(measured.per_step.size(), 14u);
    for (std::size_t t = 0; t < records.size(); ++t) {
        const Flops vanilla = attention_flops({1, 10, 64, records[t].num_positions});
        if (t < 10) {
            EXPECT_EQ(measured.per_step[t].total, vanilla);
        } else {
            EXPECT_LT(measured.per_step[t].total, vanilla);
        }
    }
    EXPECT_EQ(measured_breakdown(std::vector<StepRecord>{}, 64).mean_total, 0.0);
}

}  // namespace
}  // namespace fastocr::flops
