// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastocr/baselines.hpp"
#include "fastocr/fixation_policy.hpp"
#include "fastocr/toy_model.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::config {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Workload { Toy, Planted, Trace };

const char* to_string(Workload w);

/**
 * @brief Everything one CLI invocation needs. Defaults describe the desk-scale toy setup.
 */
struct RunConfig {
    toy::ModelConfig model;  // model.seed is replaced by each run seed
    Workload workload = Workload::Toy;
    std::size_t image_tokens = 64;
    std::size_t text_tokens = 8;
    std::filesystem::path trace_path;
    trace::PlantedConfig planted;

    std::size_t steps = 50;
    std::vector<std::uint64_t> seeds{0};
    bool instrumented = false;

    std::string policy = "fastocr";
    fixation::FixationConfig fixation;
    bool all_layers_focal = false;  // `policy.focal_layers = all`
    baseline::FastVConfig fastv;
    baseline::H2OConfig h2o;

    std::vector<std::string> compare_policies{"fastocr", "fastv", "h2o"};
    std::vector<double> compare_kappas;
    bool match_budget = true;

    std::optional<std::filesystem::path> report_path;
    std::optional<std::filesystem::path> trace_out_path;
    std::optional<std::filesystem::path> csv_path;

    std::size_t num_layers() const;

    /// Cross-field checks. Throws ConfigError.
    void validate() const;
};

/**
 * Parses `key = value` lines. `#` starts a comment; blank lines are ignored; lists are comma-separated.
 * Unknown keys, duplicate keys and malformed values raise ConfigError naming the line.
 */
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `key = value` assignment, as if it appeared in a file.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every recognised key, in documentation order.
const std::vector<std::string>& known_keys();

}  // namespace fastocr::config
