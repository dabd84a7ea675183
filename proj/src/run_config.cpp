// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/run_config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <string_view>

namespace fastocr::config {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && ws(s.front())) {
        s.remove_prefix(1);
    }
    while (!s.empty() && ws(s.back())) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        const std::size_t at = value.find(',', start);
        const auto item = trim(value.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (item.empty()) {
            throw ConfigError("empty list element");
        }
        out.emplace_back(item);
        if (at == std::string_view::npos) {
            break;
        }
        start = at + 1;
    }
    return out;
}

template <typename T>
T parse_int(std::string_view text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError(fmt::format("'{}' is not a valid non-negative integer", text));
    }
    return v;
}

double parse_double(std::string_view text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ConfigError(fmt::format("'{}' is not a finite number", text));
    }
    return v;
}

bool parse_bool(std::string_view text) {
    if (text == "true" || text == "1") {
        return true;
    }
    if (text == "false" || text == "0") {
        return false;
    }
    throw ConfigError(fmt::format("'{}' is not a boolean (true/false)", text));
}

template <typename T>
std::vector<T> parse_int_list(std::string_view text) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        out.push_back(parse_int<T>(item));
    }
    return out;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"model.layers", [](RunConfig& c, std::string_view v) { c.model.num_layers = parse_int<std::size_t>(v); }},
        {"model.hidden", [](RunConfig& c, std::string_view v) { c.model.hidden_dim = parse_int<std::size_t>(v); }},
        {"model.heads", [](RunConfig& c, std::string_view v) { c.model.num_heads = parse_int<std::size_t>(v); }},
        {"model.vocab", [](RunConfig& c, std::string_view v) { c.model.vocab_size = parse_int<std::size_t>(v); }},
        {"workload",
         [](RunConfig& c, std::string_view v) {
             if (v == "toy") {
                 c.workload = Workload::Toy;
             } else if (v == "planted") {
                 c.workload = Workload::Planted;
             } else if (v == "trace") {
                 c.workload = Workload::Trace;
             } else {
                 throw ConfigError(fmt::format("unknown workload '{}' (toy, planted, trace)", v));
             }
         }},
        {"workload.image_tokens", [](RunConfig& c, std::string_view v) { c.image_tokens = parse_int<std::size_t>(v); }},
        {"workload.text_tokens", [](RunConfig& c, std::string_view v) { c.text_tokens = parse_int<std::size_t>(v); }},
        {"workload.trace_path", [](RunConfig& c, std::string_view v) { c.trace_path = std::string(v); }},
        {"planted.layers", [](RunConfig& c, std::string_view v) { c.planted.num_layers = parse_int<std::size_t>(v); }},
        {"planted.image_tokens",
         [](RunConfig& c, std::string_view v) { c.planted.num_image_tokens = parse_int<std::size_t>(v); }},
        {"planted.text_tokens",
         [](RunConfig& c, std::string_view v) { c.planted.num_text_tokens = parse_int<std::size_t>(v); }},
        {"planted.focal_like_layers",
         [](RunConfig& c, std::string_view v) { c.planted.focal_like_layers = parse_int_list<std::size_t>(v); }},
        {"planted.mass_focal", [](RunConfig& c, std::string_view v) { c.planted.image_mass_focal = parse_double(v); }},
        {"planted.mass_nonfocal",
         [](RunConfig& c, std::string_view v) { c.planted.image_mass_nonfocal = parse_double(v); }},
        {"planted.center", [](RunConfig& c, std::string_view v) { c.planted.window_center = parse_double(v); }},
        {"planted.sigma", [](RunConfig& c, std::string_view v) { c.planted.window_sigma = parse_double(v); }},
        {"planted.drift", [](RunConfig& c, std::string_view v) { c.planted.drift = parse_double(v); }},
        {"planted.noise", [](RunConfig& c, std::string_view v) { c.planted.noise = parse_double(v); }},
        {"steps", [](RunConfig& c, std::string_view v) { c.steps = parse_int<std::size_t>(v); }},
        {"seeds", [](RunConfig& c, std::string_view v) { c.seeds = parse_int_list<std::uint64_t>(v); }},
        {"instrumented", [](RunConfig& c, std::string_view v) { c.instrumented = parse_bool(v); }},
        {"policy", [](RunConfig& c, std::string_view v) { c.policy = std::string(v); }},
        {"policy.rho", [](RunConfig& c, std::string_view v) { c.fixation.focal_layer_ratio = parse_double(v); }},
        {"policy.gap", [](RunConfig& c, std::string_view v) { c.fixation.focal_gap = parse_int<std::size_t>(v); }},
        {"policy.kappa", [](RunConfig& c, std::string_view v) { c.fixation.kept_token_ratio = parse_double(v); }},
        {"policy.warmup",
         [](RunConfig& c, std::string_view v) { c.fixation.warmup_steps = parse_int<std::size_t>(v); }},
        {"policy.focal_layers",
         [](RunConfig& c, std::string_view v) {
             c.all_layers_focal = v == "all";
             if (c.all_layers_focal) {
                 c.fixation.forced_focal_layers.reset();
             } else {
                 c.fixation.forced_focal_layers = parse_int_list<std::size_t>(v);
             }
         }},
        {"policy.fastv.layer", [](RunConfig& c, std::string_view v) { c.fastv.prune_layer = parse_int<std::size_t>(v); }},
        {"policy.fastv.ratio", [](RunConfig& c, std::string_view v) { c.fastv.prune_ratio = parse_double(v); }},
        {"policy.h2o.ratio", [](RunConfig& c, std::string_view v) { c.h2o.retain_ratio = parse_double(v); }},
        {"compare.policies", [](RunConfig& c, std::string_view v) { c.compare_policies = split_list(v); }},
        {"compare.kappas",
         [](RunConfig& c, std::string_view v) {
             c.compare_kappas.clear();
             for (const auto& item : split_list(v)) {
                 c.compare_kappas.push_back(parse_double(item));
             }
         }},
        {"compare.match_budget", [](RunConfig& c, std::string_view v) { c.match_budget = parse_bool(v); }},
        {"output.report", [](RunConfig& c, std::string_view v) { c.report_path = std::string(v); }},
        {"output.trace", [](RunConfig& c, std::string_view v) { c.trace_out_path = std::string(v); }},
        {"output.csv", [](RunConfig& c, std::string_view v) { c.csv_path = std::string(v); }},
    };
    return table;
}

}  // namespace

const char* to_string(Workload w) {
    switch (w) {
    case Workload::Toy:
        return "toy";
    case Workload::Planted:
        return "planted";
    case Workload::Trace:
        return "trace";
    }
    return "unknown";
}

std::size_t RunConfig::num_layers() const {
    return workload == Workload::Planted ? planted.num_layers : model.num_layers;
}

void RunConfig::validate() const {
    if (seeds.empty()) {
        throw ConfigError("seeds must not be empty");
    }
    if (workload == Workload::Trace && trace_path.empty()) {
        throw ConfigError("workload 'trace' requires workload.trace_path");
    }
    if (workload == Workload::Toy && text_tokens == 0) {
        throw ConfigError("workload.text_tokens must be positive");
    }
    try {
        model.validate();
        fixation.validate();
        h2o.validate();
        planted.validate();
        for (double k : compare_kappas) {
            if (!(k >= 0.0 && k <= 1.0)) {
                throw std::invalid_argument("compare.kappas entries must lie in [0, 1]");
            }
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, _] : setters()) {
            out.push_back(k);
        }
        return out;
    }();
    return keys;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& table = setters();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
    if (it == table.end()) {
        throw ConfigError(fmt::format("unknown key '{}'", key));
    }
    it->second(cfg, trim(value));
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) {
            throw ConfigError(fmt::format("config line {}: empty key or value", line_no));
        }
        if (!seen.insert(key).second) {
            throw ConfigError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        }
        try {
            apply_setting(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("config line {}: {}", line_no, e.what()));
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path.string());
    }
    return parse_config(in);
}

}  // namespace fastocr::config
