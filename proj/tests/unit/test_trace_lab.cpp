// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "fastocr/baselines.hpp"
#include "fastocr/fixation_policy.hpp"
#include "fastocr/metrics.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::trace {
namespace {

PlantedConfig small_config() {
    PlantedConfig pc;
    pc.num_layers = 3;
    pc.num_image_tokens = 5;
    pc.num_text_tokens = 2;
    pc.focal_like_layers = {1};
    pc.num_steps = 2;
    pc.noise = 0.1;
    return pc;
}

std::string serialized(const TraceFile& t) {
    std::ostringstream os;
    write_trace(t, os);
    return os.str();
}

void expect_read_error(const std::string& text, const std::string& fragment) {
    std::istringstream in(text);
    try {
        read_trace(in);
        FAIL() << "expected a TraceError containing '" << fragment << "'";
    } catch (const TraceError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

std::string join(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l + "\n";
    }
    return out;
}

TEST(PlantedTest, WeightsAreNormalizedWithPlantedMass) {
    PlantedConfig pc;
    pc.noise = 0.05;
    pc.num_steps = 5;
    const PlantedTrace t = generate_trace(pc);
    ASSERT_EQ(t.weights.size(), 5u);
    for (std::size_t s = 0; s < 5; ++s) {
        for (std::size_t l = 0; l < pc.num_layers; ++l) {
            const Vec& w = t.weights[s][l];
            ASSERT_EQ(w.size(), 200u + 16u + s + 1);
            EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
            const double image = std::accumulate(w.begin(), w.begin() + 200, 0.0);
            const bool focal = l == 2 || l == 5 || l == 7;
            EXPECT_NEAR(image, focal ? 0.422 : 0.143, 1e-12);
        }
    }
}

TEST(PlantedTest, WindowConcentratesAroundCenter) {
    PlantedConfig pc;
    pc.num_image_tokens = 100;
    pc.num_steps = 1;
    const PlantedTrace t = generate_trace(pc);
    const Vec& w = t.weights[0][0];
    std::vector<std::size_t> order(100);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + 5, order.end(),
                      [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    std::vector<std::size_t> top(order.begin(), order.begin() + 5);
    std::sort(top.begin(), top.end());
    EXPECT_EQ(top, (std::vector<std::size_t>{8, 9, 10, 11, 12}));
}

TEST(PlantedTest, CentersDriftAndClamp) {
    PlantedConfig pc;
    pc.num_image_tokens = 20;
    pc.window_center = 15.0;
    pc.drift = 2.0;
    pc.num_steps = 5;
    const PlantedTrace t = generate_trace(pc);
    EXPECT_EQ(t.centers, (std::vector<double>{15.0, 17.0, 19.0, 19.0, 19.0}));
}

TEST(PlantedTest, ZeroSigmaIsPointMass) {
    PlantedConfig pc = small_config();
    pc.window_sigma = 0.0;
    pc.window_center = 2.0;
    pc.noise = 0.0;
    const PlantedTrace t = generate_trace(pc);
    EXPECT_DOUBLE_EQ(t.weights[0][1][2], 0.422);
    EXPECT_DOUBLE_EQ(t.weights[0][1][1], 0.0);
}

TEST(PlantedTest, UnderflowingWindowFallsBackToNearestPosition) {
    PlantedConfig pc = small_config();
    pc.window_sigma = 0.01;
    pc.window_center = 2.4;
    pc.drift = 0.0;
    pc.noise = 0.1;
    const PlantedTrace t = generate_trace(pc);
    for (const Vec& w : t.weights[0]) {
        for (double v : w) {
            ASSERT_TRUE(std::isfinite(v));
        }
    }
    EXPECT_GT(t.weights[0][1][2], 0.9 * 0.422);
}

TEST(PlantedTest, DeterministicPerSeed) {
    PlantedConfig a = small_config();
    PlantedConfig b = a;
    b.seed = 1;
    EXPECT_EQ(generate_trace(a).weights, generate_trace(a).weights);
    EXPECT_NE(generate_trace(a).weights, generate_trace(b).weights);
}

TEST(PlantedTest, RejectsBadConfig) {
    PlantedConfig pc = small_config();
    pc.focal_like_layers = {3};
    EXPECT_THROW(generate_trace(pc), std::invalid_argument);
    pc = small_config();
    pc.noise = 1.0;
    EXPECT_THROW(generate_trace(pc), std::invalid_argument);
    pc = small_config();
    pc.image_mass_focal = 0.0;
    EXPECT_THROW(generate_trace(pc), std::invalid_argument);
}

TEST(TraceFormatTest, RoundTripWithinTolerance) {
    PlantedConfig pc;
    pc.noise = 0.05;
    pc.num_steps = 4;
    const TraceFile original = to_trace_file(generate_trace(pc));
    std::istringstream in(serialized(original));
    const TraceFile back = read_trace(in);
    EXPECT_EQ(back.num_layers, original.num_layers);
    EXPECT_EQ(back.num_image_tokens, 200u);
    EXPECT_EQ(back.num_text_tokens, 16u);
    EXPECT_EQ(back.source, "planted");
    ASSERT_EQ(back.num_steps(), 4u);
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t l = 0; l < pc.num_layers; ++l) {
            for (std::size_t i = 0; i < original.steps[s][l].size(); ++i) {
                ASSERT_NEAR(back.steps[s][l][i], original.steps[s][l][i], 1e-12);
            }
        }
    }
}

TEST(TraceFormatTest, FileRoundTrip) {
    const TraceFile original = to_trace_file(generate_trace(small_config()));
    const auto path = std::filesystem::temp_directory_path() / "fastocr_trace_roundtrip.trace";
    write_trace(original, path);
    EXPECT_EQ(read_trace(path).steps, original.steps);
    std::filesystem::remove(path);
    EXPECT_THROW(read_trace(path), TraceError);
}

TEST(TraceFormatTest, HeaderErrors) {
    expect_read_error("", "line 1: empty trace");
    expect_read_error("#trace v2 L=1 Nimg=1 Ntext=1 source=x\n", "line 1: malformed header");
    expect_read_error("#trace v1 L=1 Nimg=1 source=x\n", "line 1: malformed header");
    expect_read_error("#trace v1 L=a Nimg=1 Ntext=1 source=x\n", "line 1: field 'L'");
    expect_read_error("#trace v1 L=0 Nimg=1 Ntext=1 source=x\n", "zero layers");
}

TEST(TraceFormatTest, BodyErrorsCarryLineNumbers) {
    const auto lines = lines_of(serialized(to_trace_file(generate_trace(small_config()))));
    ASSERT_EQ(lines.size(), 7u);  // header + 2 steps x 3 layers

    auto truncated = lines;
    truncated.pop_back();
    expect_read_error(join(truncated), "line 6: truncated trace: step 2 stops after layer 1");

    auto gap = lines;
    gap.erase(gap.begin() + 2);
    expect_read_error(join(gap), "line 3: grid gap: expected t=1 l=1, got t=1 l=2");

    auto dup = lines;
    dup.insert(dup.begin() + 2, lines[1]);
    expect_read_error(join(dup), "line 3: duplicate or out-of-order record t=1 l=0");

    auto short_row = lines;
    short_row[4] = short_row[4].substr(0, short_row[4].rfind(','));
    expect_read_error(join(short_row), "line 5: t=2 l=0: 8 weights, expected 9");

    auto negative = lines;
    negative[1] = "t=1 l=0 w=-0.1" + negative[1].substr(negative[1].find(','));
    expect_read_error(join(negative), "line 2: t=1 l=0: weight 0");

    auto bad_field = lines;
    bad_field[1] = "t=1 l=0";
    expect_read_error(join(bad_field), "line 2: expected");
}

TEST(TraceFormatTest, TraceFromRecordsNeedsOracle) {
    StepRecord rec;
    rec.layers.resize(1);
    const std::vector<StepRecord> records{rec};
    EXPECT_THROW(trace_from_records(records, 1, 2, 1), std::invalid_argument);
}

TEST(ReplayTest, FullKappaKeepsEveryImagePosition) {
    PlantedConfig pc;
    pc.noise = 0.02;
    pc.num_steps = 14;
    fixation::FixationConfig fc;
    fc.kept_token_ratio = 1.0;
    fixation::FixationPolicy policy(fc, 10);
    const auto records = replay(to_trace_file(generate_trace(pc)), policy);
    for (const auto& rec : records) {
        for (const auto& lr : rec.layers) {
            EXPECT_EQ(lr.attended.size(), rec.num_positions);
        }
    }
}

TEST(ReplayTest, WarmupOnlyPrefixPrunesNothing) {
    PlantedConfig pc;
    pc.num_steps = 10;
    fixation::FixationConfig fc;
    fixation::FixationPolicy policy(fc, 10);
    const auto records = replay(to_trace_file(generate_trace(pc)), policy);
    ASSERT_EQ(records.size(), 10u);
    for (const auto& rec : records) {
        EXPECT_EQ(rec.phase, Phase::Warmup);
        for (const auto& lr : rec.layers) {
            EXPECT_EQ(lr.mode, AttentionMode::Full);
            EXPECT_EQ(lr.attended.size(), rec.num_positions);
        }
    }
    EXPECT_EQ(records.back().focal_layers.size(), 1u);
}

TEST(ReplayTest, ShortTraceIsInsufficientWarmup) {
    PlantedConfig pc;
    pc.num_steps = 9;
    fixation::FixationPolicy policy(fixation::FixationConfig{}, 10);
    try {
        replay(to_trace_file(generate_trace(pc)), policy);
        FAIL() << "expected TraceError";
    } catch (const TraceError& e) {
        EXPECT_NE(std::string(e.what()).find("insufficient warmup data"), std::string::npos);
    }
    fixation::FixationPolicy again(fixation::FixationConfig{}, 10);
    ReplayOptions opts;
    opts.max_steps = 5;
    pc.num_steps = 20;
    EXPECT_THROW(replay(to_trace_file(generate_trace(pc)), again, opts), TraceError);
}

TEST(ReplayTest, AttendedWeightsAreRenormalizedRecordedWeights) {
    PlantedConfig pc = small_config();
    const TraceFile file = to_trace_file(generate_trace(pc));
    baseline::VanillaPolicy policy;
    const auto records = replay(file, policy);
    const LayerRecord& lr = records[1].layers[1];
    ASSERT_TRUE(lr.oracle_weights);
    EXPECT_EQ(*lr.oracle_weights, file.steps[1][1]);
    EXPECT_NEAR(lr.image_ratio, 0.422, 1e-12);
}

TEST(ReplayTest, CarriedWindowCoversDriftingFixation) {
    PlantedConfig pc;
    pc.noise = 0.0;
    pc.num_steps = 30;
    fixation::FixationConfig fc;
    fc.focal_layer_ratio = 0.3;
    fc.kept_token_ratio = 0.1;
    fixation::FixationPolicy policy(fc, 10);
    const auto records = replay(to_trace_file(generate_trace(pc)), policy);
    const auto summary = metrics::summarize_attention(records);
    ASSERT_GT(summary.inherited_recall.count, 0u);
    // The 20 kept tokens around the previous center lose only the one-token drift at the edge.
    EXPECT_GT(summary.inherited_recall.min, 0.95);
    EXPECT_GT(summary.focal_recall.min, 0.99);
}

TEST(ReplayTest, ZeroDriftCarriesIdenticalSets) {
    PlantedConfig pc;
    pc.noise = 0.0;
    pc.drift = 0.0;
    pc.num_steps = 20;
    fixation::FixationConfig fc;
    fc.focal_layer_ratio = 0.3;
    fixation::FixationPolicy policy(fc, 10);
    const auto summary = metrics::summarize_attention(replay(to_trace_file(generate_trace(pc)), policy));
    ASSERT_GT(summary.carried_jaccard.count, 0u);
    EXPECT_DOUBLE_EQ(summary.carried_jaccard.min, 1.0);
}

}  // namespace
}  // namespace fastocr::trace
