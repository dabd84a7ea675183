// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/report.hpp"

#include <fmt/format.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string_view>

namespace fastocr::report {

namespace {

constexpr int kSchemaVersion = 1;

constexpr std::array<std::string_view, 5> kSections = {"meta", "sequence_metrics", "attention_metrics", "flops",
                                                       "focal_layers"};

constexpr std::string_view kNotReproduced =
    "Benchmark OCR accuracy, GPU latency and focal-layer distributions of real vision-language models are not "
    "reproduced. Sequence agreement and attention recall are desk-scale proxy metrics measured on a randomly "
    "initialized toy decoder or on synthetic traces. FLOPs follow the per-token self-attention cost model.";

Json optional_mean(const metrics::Accumulator& acc) {
    return acc.count ? Json(acc.mean()) : Json(nullptr);
}

double mean_of(const std::vector<SeedAgreement>& rows, double SeedAgreement::*field) {
    if (rows.empty()) {
        return 1.0;
    }
    double sum = 0.0;
    for (const auto& r : rows) {
        sum += r.*field;
    }
    return sum / static_cast<double>(rows.size());
}

[[noreturn]] void violation(const std::string& where, const std::string& what) {
    throw SchemaError(fmt::format("report schema violation at {}: {}", where, what));
}

const Json& require(const Json& obj, const std::string& where, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) {
        violation(where, fmt::format("missing field '{}'", key));
    }
    return obj.at(key);
}

void require_fraction(const Json& v, const std::string& where, bool nullable = false) {
    if (nullable && v.is_null()) {
        return;
    }
    if (!v.is_number()) {
        violation(where, "expected a number");
    }
    const double d = v.get<double>();
    if (!(d >= 0.0 && d <= 1.0)) {
        violation(where, fmt::format("fraction {} outside [0, 1]", d));
    }
}

void require_non_negative(const Json& v, const std::string& where) {
    if (!v.is_number() || v.get<double>() < 0.0) {
        violation(where, "expected a non-negative number");
    }
}

void require_string(const Json& v, const std::string& where) {
    if (!v.is_string() || v.get<std::string>().empty()) {
        violation(where, "expected a non-empty string");
    }
}

const Json& require_array(const Json& doc, const char* key) {
    const Json& arr = require(doc, "/", key);
    if (!arr.is_array()) {
        violation(key, "expected an array");
    }
    return arr;
}

}  // namespace

Json to_json(const Report& report) {
    Json doc;
    Json meta;
    meta["tool"] = "fastocr-sim";
    meta["schema_version"] = kSchemaVersion;
    meta["command"] = report.command;
    meta["workload"] = report.workload;
    meta["instrumented"] = report.instrumented;
    meta["seeds"] = report.seeds;
    meta["steps"] = report.steps;
    meta["model"] = report.model;
    meta["policies"] = Json::array();
    for (const auto& e : report.entries) {
        meta["policies"].push_back({{"label", e.label}, {"policy", e.policy}, {"parameters", e.parameters}});
    }
    meta["proxy_metrics"] = {"sequence_metrics.prefix_agreement", "sequence_metrics.token_match_rate",
                             "attention_metrics.gathered_recall", "attention_metrics.inherited_recall",
                             "attention_metrics.focal_recall", "attention_metrics.carried_jaccard"};
    meta["not_reproduced"] = kNotReproduced;
    meta["flops_note"] = "per decoding token, batch 1, self-attention only; a layer-0 fallback pass counts at full context";
    doc["meta"] = std::move(meta);

    Json seq = Json::array();
    Json att = Json::array();
    Json flops = Json::array();
    Json focal = Json::array();
    for (const auto& e : report.entries) {
        Json s;
        s["label"] = e.label;
        s["proxy"] = true;
        s["reference"] = e.has_reference ? Json("vanilla") : Json(nullptr);
        s["prefix_agreement"] = e.has_reference ? Json(mean_of(e.agreement, &SeedAgreement::prefix_agreement))
                                                : Json(nullptr);
        s["token_match_rate"] = e.has_reference ? Json(mean_of(e.agreement, &SeedAgreement::token_match_rate))
                                                : Json(nullptr);
        s["per_seed"] = Json::array();
        if (e.has_reference) {
            for (const auto& r : e.agreement) {
                s["per_seed"].push_back(
                    {{"seed", r.seed}, {"prefix_agreement", r.prefix_agreement}, {"token_match_rate", r.token_match_rate}});
            }
        }
        seq.push_back(std::move(s));

        Json a;
        a["label"] = e.label;
        a["proxy"] = true;
        a["oracle_available"] = e.attention.has_oracle;
        a["gathered_recall"] = optional_mean(e.attention.gathered_recall);
        a["inherited_recall"] = optional_mean(e.attention.inherited_recall);
        a["focal_recall"] = optional_mean(e.attention.focal_recall);
        a["carried_jaccard"] = optional_mean(e.attention.carried_jaccard);
        a["image_ratio_mean"] = optional_mean(e.attention.image_ratio);
        att.push_back(std::move(a));

        Json f;
        f["label"] = e.label;
        f["mean_step_flops"] = e.mean_step_flops;
        f["mean_context"] = e.mean_context;
        f["vanilla_step_flops"] = e.reference_step_flops;
        const bool comparable = e.reference_step_flops > 0.0 && e.mean_step_flops > 0.0;
        f["relative_flops"] = comparable ? Json(e.mean_step_flops / e.reference_step_flops) : Json(nullptr);
        f["speedup"] = comparable ? Json(e.reference_step_flops / e.mean_step_flops) : Json(nullptr);
        flops.push_back(std::move(f));

        if (e.focal) {
            focal.push_back({{"label", e.label},
                             {"runs", e.focal->runs},
                             {"mean_size", e.focal->mean_size},
                             {"frequency", e.focal->per_layer}});
        }
    }
    doc["sequence_metrics"] = std::move(seq);
    doc["attention_metrics"] = std::move(att);
    doc["flops"] = std::move(flops);
    doc["focal_layers"] = std::move(focal);
    return doc;
}

std::string to_csv(const Report& report) {
    std::string out = "step,layer,ratio\n";
    for (const auto& row : report.ratio_rows) {
        fmt::format_to(std::back_inserter(out), "{},{},{:.17g}\n", row.step, row.layer, row.ratio);
    }
    return out;
}

void validate_report(const Json& doc) {
    if (!doc.is_object()) {
        violation("/", "document is not an object");
    }
    if (doc.size() != kSections.size()) {
        violation("/", fmt::format("expected exactly {} top-level fields", kSections.size()));
    }
    for (std::string_view key : kSections) {
        require(doc, "/", std::string(key).c_str());
    }

    const Json& meta = doc.at("meta");
    if (!meta.is_object()) {
        violation("meta", "expected an object");
    }
    if (require(meta, "meta", "schema_version") != kSchemaVersion) {
        violation("meta.schema_version", "unsupported version");
    }
    require_string(require(meta, "meta", "command"), "meta.command");
    require_string(require(meta, "meta", "workload"), "meta.workload");
    if (!require(meta, "meta", "instrumented").is_boolean()) {
        violation("meta.instrumented", "expected a boolean");
    }
    const Json& seeds = require(meta, "meta", "seeds");
    if (!seeds.is_array() || seeds.empty()) {
        violation("meta.seeds", "expected a non-empty array");
    }
    for (const auto& s : seeds) {
        if (!s.is_number_unsigned()) {
            violation("meta.seeds", "seeds must be non-negative integers");
        }
    }
    const Json& proxies = require(meta, "meta", "proxy_metrics");
    if (!proxies.is_array() || proxies.empty()) {
        violation("meta.proxy_metrics", "proxy metrics must be labelled");
    }
    require_string(require(meta, "meta", "not_reproduced"), "meta.not_reproduced");

    for (const auto& s : require_array(doc, "sequence_metrics")) {
        require_string(require(s, "sequence_metrics", "label"), "sequence_metrics.label");
        if (require(s, "sequence_metrics", "proxy") != true) {
            violation("sequence_metrics.proxy", "sequence metrics must be flagged as proxies");
        }
        require_fraction(require(s, "sequence_metrics", "prefix_agreement"), "sequence_metrics.prefix_agreement", true);
        require_fraction(require(s, "sequence_metrics", "token_match_rate"), "sequence_metrics.token_match_rate", true);
    }
    for (const auto& a : require_array(doc, "attention_metrics")) {
        require_string(require(a, "attention_metrics", "label"), "attention_metrics.label");
        for (const char* key : {"gathered_recall", "inherited_recall", "focal_recall", "carried_jaccard",
                                "image_ratio_mean"}) {
            require_fraction(require(a, "attention_metrics", key), std::string("attention_metrics.") + key, true);
        }
    }
    for (const auto& f : require_array(doc, "flops")) {
        require_string(require(f, "flops", "label"), "flops.label");
        require_non_negative(require(f, "flops", "mean_step_flops"), "flops.mean_step_flops");
        require_non_negative(require(f, "flops", "mean_context"), "flops.mean_context");
    }
    for (const auto& f : require_array(doc, "focal_layers")) {
        require_string(require(f, "focal_layers", "label"), "focal_layers.label");
        const Json& freq = require(f, "focal_layers", "frequency");
        if (!freq.is_array()) {
            violation("focal_layers.frequency", "expected an array");
        }
        for (const auto& v : freq) {
            require_fraction(v, "focal_layers.frequency");
        }
        require_non_negative(require(f, "focal_layers", "mean_size"), "focal_layers.mean_size");
    }
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot move report into place at " + path.string() + ": " + ec.message());
    }
}

void emit_report(const Report& report, Format format, const std::filesystem::path& path) {
    if (format == Format::Csv) {
        write_atomic(path, to_csv(report));
        return;
    }
    const Json doc = to_json(report);
    validate_report(doc);
    write_atomic(path, doc.dump(2) + "\n");
}

}  // namespace fastocr::report
