// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fastocr/metrics.hpp"

namespace fastocr::report {

using Json = nlohmann::ordered_json;

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SeedAgreement {
    std::uint64_t seed = 0;
    double prefix_agreement = 1.0;
    double token_match_rate = 1.0;
};

/// Everything reported for one policy configuration, aggregated over seeds.
struct PolicyEntry {
    std::string label;
    std::string policy;
    Json parameters = Json::object();

    std::vector<SeedAgreement> agreement;  // against the vanilla reference on the same seeds
    bool has_reference = false;

    metrics::AttentionSummary attention;

    double mean_step_flops = 0.0;
    double mean_context = 0.0;
    double reference_step_flops = 0.0;

    std::optional<metrics::FocalFrequency> focal;
};

struct RatioRow {
    std::size_t step = 0;
    std::size_t layer = 0;
    double ratio = 0.0;
};

struct Report {
    std::string command;
    std::string workload;
    bool instrumented = false;
    std::vector<std::uint64_t> seeds;
    std::size_t steps = 0;
    Json model = Json::object();
    std::vector<PolicyEntry> entries;
    std::vector<RatioRow> ratio_rows;  // mean over seeds per (step, layer)
};

enum class Format { Json, Csv };

/// Fixed-order JSON document with the top-level sections meta, sequence_metrics, attention_metrics, flops,
/// focal_layers.
Json to_json(const Report& report);

/// `step,layer,ratio` rows.
std::string to_csv(const Report& report);

/// Throws SchemaError naming the first violation.
void validate_report(const Json& doc);

/// Writes through a temporary sibling file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

void emit_report(const Report& report, Format format, const std::filesystem::path& path);

}  // namespace fastocr::report
