// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fastocr/experiment.hpp"
#include "fastocr/flops.hpp"
#include "fastocr/kv_store.hpp"
#include "fastocr/run_config.hpp"
#include "fastocr/trace_lab.hpp"

namespace fastocr::cli {

namespace {

struct FlopsArgs {
    std::uint64_t batch = 0;
    std::uint64_t layers = 0;
    std::uint64_t hidden = 0;
    std::uint64_t seqlen = 0;
    std::string policy = "vanilla";
    std::optional<std::uint64_t> n_focal;
    std::optional<std::uint64_t> s_pruned;
};

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

struct ReplayArgs {
    std::string trace_path;
    std::string config_path;
    std::vector<std::string> overrides;
};

config::RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& overrides,
                                      config::RunConfig cfg = {}) {
    if (!path.empty()) {
        cfg = config::load_config(path);
    }
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw config::ConfigError(fmt::format("--set expects key=value, got '{}'", item));
        }
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        config::apply_setting(cfg, trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
    const flops::Flops vanilla = flops::attention_flops({a.batch, a.layers, a.hidden, a.seqlen});
    out << fmt::format("vanilla  b={} l={} h={} s={}  {} FLOPs  {} G\n", a.batch, a.layers, a.hidden, a.seqlen,
                       vanilla, flops::format_giga(vanilla));
    if (a.policy == "vanilla") {
        return kSuccess;
    }
    if (a.policy != "fastocr") {
        throw config::ConfigError(fmt::format("flops: unknown policy '{}' (vanilla, fastocr)", a.policy));
    }
    if (!a.n_focal || !a.s_pruned) {
        throw config::ConfigError("flops --policy fastocr requires --n-focal and --s-pruned");
    }
    const auto bd = flops::fastocr_flops(a.batch, a.layers, a.hidden, a.seqlen, *a.n_focal, *a.s_pruned);
    out << fmt::format("fastocr  n_focal={} s_pruned={}  {} FLOPs  {} G  (projection {}, attention {})\n", *a.n_focal,
                       *a.s_pruned, bd.total, flops::format_giga(bd.total), bd.projection_flops, bd.attention_flops);
    return kSuccess;
}

int emit(const config::RunConfig& cfg, const experiment::CommandResult& result, std::ostream& out) {
    const std::string json = experiment::write_outputs(cfg, result);
    if (!cfg.report_path) {
        out << json;
    }
    return kSuccess;
}

}  // namespace

void configure_logging() {
    auto logger = spdlog::get("fastocr");
    if (!logger) {
        logger = spdlog::stderr_color_mt("fastocr");
    }
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("FASTOCR_LOG");
    const std::string level = env != nullptr ? env : "";
    if (level == "quiet") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "info") {
        spdlog::set_level(spdlog::level::info);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        spdlog::set_level(spdlog::level::warn);
        if (!level.empty()) {
            spdlog::warn("FASTOCR_LOG='{}' not recognised; expected quiet, info or debug", level);
        }
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decode-time visual KV selection simulator"};
    app.require_subcommand(1);

    FlopsArgs fa;
    auto* flops_cmd = app.add_subcommand("flops", "Per-token self-attention FLOPs b*l*(8h^2 + 4hs)");
    flops_cmd->add_option("--batch", fa.batch, "Batch size b")->required();
    flops_cmd->add_option("--layers", fa.layers, "Transformer blocks l")->required();
    flops_cmd->add_option("--hidden", fa.hidden, "Hidden size h")->required();
    flops_cmd->add_option("--seqlen", fa.seqlen, "Context length s")->required();
    flops_cmd->add_option("--policy", fa.policy, "vanilla or fastocr")->capture_default_str();
    flops_cmd->add_option("--n-focal", fa.n_focal, "Focal layers at full context (fastocr)");
    flops_cmd->add_option("--s-pruned", fa.s_pruned, "Context of non-focal layers (fastocr)");

    ConfigArgs ca;
    auto add_config_cmd = [&](const char* name, const char* help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", ca.config_path, "key = value config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", ca.overrides, "Override a config key (key=value), repeatable");
        return sub;
    };
    auto* run_cmd = add_config_cmd("run", "Run the configured policy on every seed and write a report");
    auto* compare_cmd = add_config_cmd("compare", "Run vanilla and the configured policies side by side");
    auto* profile_cmd = add_config_cmd("profile", "Instrumented run; per-layer ratio CSV and focal-layer frequency");

    ReplayArgs ra;
    auto* replay_cmd = app.add_subcommand("replay", "Drive a policy with a recorded attention trace");
    replay_cmd->add_option("--trace", ra.trace_path, "Trace file")->required();
    replay_cmd->add_option("--config", ra.config_path, "Optional config file for policy and output settings")
        ->check(CLI::ExistingFile);
    replay_cmd->add_option("--set", ra.overrides, "Override a config key (key=value), repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUserError;
    }

    try {
        if (*flops_cmd) {
            return cmd_flops(fa, out);
        }
        if (*run_cmd) {
            const auto cfg = load_with_overrides(ca.config_path, ca.overrides);
            return emit(cfg, experiment::cmd_run(cfg), out);
        }
        if (*compare_cmd) {
            const auto cfg = load_with_overrides(ca.config_path, ca.overrides);
            return emit(cfg, experiment::cmd_compare(cfg), out);
        }
        if (*profile_cmd) {
            const auto cfg = load_with_overrides(ca.config_path, ca.overrides);
            return emit(cfg, experiment::cmd_profile(cfg), out);
        }
        if (*replay_cmd) {
            config::RunConfig defaults;
            defaults.steps = 0;
            auto cfg = load_with_overrides(ra.config_path, ra.overrides, defaults);
            cfg.workload = config::Workload::Trace;
            cfg.trace_path = ra.trace_path;
            return emit(cfg, experiment::cmd_replay(cfg), out);
        }
    } catch (const kv::ContractViolation& e) {
        err << "error: " << e.what() << "\n";
        return kInvariantViolation;
    } catch (const experiment::InvariantViolation& e) {
        err << "error: " << e.what() << "\n";
        return kInvariantViolation;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUserError;
    } catch (const std::runtime_error& e) {
        // Config, trace-format, I/O and insufficient-warmup errors.
        err << "error: " << e.what() << "\n";
        return kUserError;
    } catch (const std::exception& e) {
        err << "internal invariant violation: " << e.what() << "\n";
        return kInvariantViolation;
    }
    return kUserError;
}

}  // namespace fastocr::cli
