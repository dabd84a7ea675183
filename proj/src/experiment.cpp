// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <iterator>
#include <map>
#include <numeric>

#include "fastocr/flops.hpp"
#include "fastocr/metrics.hpp"
#include "fastocr/toy_model.hpp"

namespace fastocr::experiment {

namespace {

using config::RunConfig;
using config::Workload;

[[noreturn]] void broken(const std::string& invariant, std::uint64_t seed, std::size_t step) {
    throw InvariantViolation(fmt::format("invariant violated: {} (seed {}, step {})", invariant, seed, step));
}

std::vector<std::size_t> focal_layers_of(const DecodePolicy& policy) {
    if (const auto* fp = dynamic_cast<const fixation::FixationPolicy*>(&policy)) {
        return fp->state().focal_set.layers;
    }
    return {};
}

SeedRun run_toy_seed(const RunConfig& cfg, const PolicySpec& spec, std::uint64_t seed, bool instrumented) {
    toy::ModelConfig mc = cfg.model;
    mc.seed = seed;
    auto weights = std::make_shared<const toy::ModelWeights>(toy::init_model(mc));
    toy::DecodeSession session(weights, make_policy(spec, mc.num_layers), {instrumented});
    const auto prompt = toy::synthetic_prompt(seed, cfg.text_tokens, mc.vocab_size);
    session.prefill(cfg.image_tokens, prompt);
    SeedRun run;
    run.seed = seed;
    run.tokens = session.generate(cfg.steps);
    run.records = session.records();
    run.focal_layers = focal_layers_of(session.policy());
    run.num_image_tokens = cfg.image_tokens;
    run.num_text_tokens = cfg.text_tokens;
    return run;
}

SeedRun replay_seed(const trace::TraceFile& tf, const PolicySpec& spec, std::uint64_t seed, std::size_t steps,
                    bool instrumented) {
    auto policy = make_policy(spec, tf.num_layers);
    SeedRun run;
    run.seed = seed;
    run.records = trace::replay(tf, *policy, {instrumented, steps});
    run.focal_layers = focal_layers_of(*policy);
    run.num_image_tokens = tf.num_image_tokens;
    run.num_text_tokens = tf.num_text_tokens;
    return run;
}

trace::TraceFile planted_trace(const RunConfig& cfg, std::uint64_t seed) {
    trace::PlantedConfig pc = cfg.planted;
    pc.seed = seed;
    pc.num_steps = cfg.steps;
    return trace::to_trace_file(trace::generate_trace(pc));
}

std::string ratio_label(const char* prefix, double value) { return fmt::format("{}[{:.4g}]", prefix, value); }

report::Report base_report(const RunConfig& cfg, const char* command, bool instrumented) {
    report::Report rep;
    rep.command = command;
    rep.workload = config::to_string(cfg.workload);
    rep.instrumented = instrumented;
    rep.seeds = cfg.workload == Workload::Trace ? std::vector<std::uint64_t>{cfg.seeds.front()} : cfg.seeds;
    rep.steps = cfg.steps;
    if (cfg.workload == Workload::Toy) {
        rep.model = {{"layers", cfg.model.num_layers},   {"hidden", cfg.model.hidden_dim},
                     {"heads", cfg.model.num_heads},     {"vocab", cfg.model.vocab_size},
                     {"image_tokens", cfg.image_tokens}, {"text_tokens", cfg.text_tokens}};
    } else if (cfg.workload == Workload::Planted) {
        rep.model = {{"layers", cfg.planted.num_layers},
                     {"image_tokens", cfg.planted.num_image_tokens},
                     {"text_tokens", cfg.planted.num_text_tokens},
                     {"focal_like_layers", cfg.planted.focal_like_layers},
                     {"mass_focal", cfg.planted.image_mass_focal},
                     {"mass_nonfocal", cfg.planted.image_mass_nonfocal},
                     {"sigma", cfg.planted.window_sigma},
                     {"drift", cfg.planted.drift},
                     {"noise", cfg.planted.noise}};
    } else {
        rep.model = {{"trace_path", cfg.trace_path.string()}};
    }
    return rep;
}

std::optional<trace::TraceFile> first_trace(const RunConfig& cfg, const PolicyRun& run) {
    if (cfg.workload == Workload::Planted) {
        return planted_trace(cfg, cfg.seeds.front());
    }
    if (cfg.workload == Workload::Toy && !run.seeds.empty() && !run.seeds.front().records.empty() &&
        run.seeds.front().records.front().layers.front().oracle_weights) {
        const SeedRun& s = run.seeds.front();
        return trace::trace_from_records(s.records, cfg.model.num_layers, s.num_image_tokens, s.num_text_tokens);
    }
    return std::nullopt;
}

CommandResult single_policy(const RunConfig& cfg, const char* command, bool instrumented) {
    const std::size_t layers = cfg.num_layers();
    const PolicySpec spec = spec_from_config(cfg, cfg.policy);
    PolicyRun run = execute(cfg, spec, instrumented);
    check_invariants(run, layers);
    std::optional<PolicyRun> reference;
    if (spec.name != "vanilla") {
        reference = execute(cfg, spec_from_config(cfg, "vanilla"), false);
        check_invariants(*reference, layers);
    }
    CommandResult out;
    out.report = base_report(cfg, command, instrumented);
    if (!run.seeds.empty()) {
        out.report.steps = run.seeds.front().records.size();
    }
    out.report.entries.push_back(
        summarize(run, reference ? &*reference : &run, cfg.model.hidden_dim, layers));
    out.report.ratio_rows = ratio_rows(run);
    if (cfg.trace_out_path) {
        out.trace = first_trace(cfg, run);
        if (!out.trace) {
            spdlog::warn("output.trace is set but this run recorded no oracle weights; no trace written");
        }
    }
    return out;
}

}  // namespace

report::Json PolicySpec::parameters() const {
    report::Json p = report::Json::object();
    if (name == "fastocr") {
        p["rho"] = fixation.focal_layer_ratio;
        p["gap"] = fixation.focal_gap;
        p["kappa"] = fixation.kept_token_ratio;
        p["warmup"] = fixation.warmup_steps;
        p["forced_focal_layers"] =
            fixation.forced_focal_layers ? report::Json(*fixation.forced_focal_layers) : report::Json(nullptr);
    } else if (name == "fastv") {
        p["layer"] = fastv.prune_layer;
        p["ratio"] = fastv.prune_ratio;
    } else if (name == "h2o") {
        p["ratio"] = h2o.retain_ratio;
    }
    return p;
}

PolicySpec spec_from_config(const RunConfig& cfg, const std::string& name) {
    PolicySpec spec;
    spec.label = name;
    spec.name = name;
    spec.fixation = cfg.fixation;
    spec.fastv = cfg.fastv;
    spec.h2o = cfg.h2o;
    if (cfg.all_layers_focal) {
        std::vector<std::size_t> all(cfg.num_layers());
        std::iota(all.begin(), all.end(), std::size_t{0});
        spec.fixation.forced_focal_layers = std::move(all);
    }
    if (name != "fastocr" && name != "vanilla" && name != "fastv" && name != "h2o") {
        throw config::ConfigError(fmt::format("unknown policy '{}' (fastocr, vanilla, fastv, h2o)", name));
    }
    return spec;
}

std::unique_ptr<DecodePolicy> make_policy(const PolicySpec& spec, std::size_t num_layers) {
    try {
        if (spec.name == "fastocr") {
            return std::make_unique<fixation::FixationPolicy>(spec.fixation, num_layers);
        }
        if (spec.name == "vanilla") {
            return std::make_unique<baseline::VanillaPolicy>();
        }
        if (spec.name == "fastv") {
            return std::make_unique<baseline::FastVPolicy>(spec.fastv, num_layers);
        }
        if (spec.name == "h2o") {
            return std::make_unique<baseline::H2OPolicy>(spec.h2o);
        }
    } catch (const std::invalid_argument& e) {
        throw config::ConfigError(fmt::format("policy '{}': {}", spec.label, e.what()));
    }
    throw config::ConfigError(fmt::format("unknown policy '{}'", spec.name));
}

PolicyRun execute(const RunConfig& cfg, const PolicySpec& spec, bool instrumented) {
    PolicyRun run;
    run.spec = spec;
    switch (cfg.workload) {
    case Workload::Toy:
        for (std::uint64_t seed : cfg.seeds) {
            run.seeds.push_back(run_toy_seed(cfg, spec, seed, instrumented));
        }
        break;
    case Workload::Planted:
        for (std::uint64_t seed : cfg.seeds) {
            run.seeds.push_back(replay_seed(planted_trace(cfg, seed), spec, seed, cfg.steps, instrumented));
        }
        break;
    case Workload::Trace: {
        const trace::TraceFile tf = trace::read_trace(cfg.trace_path);
        run.seeds.push_back(replay_seed(tf, spec, cfg.seeds.front(), cfg.steps, instrumented));
        break;
    }
    }
    spdlog::info("{}: {} seed(s) done", spec.label, run.seeds.size());
    return run;
}

void check_invariants(const PolicyRun& run, std::size_t num_layers) {
    const bool fixation_policy = run.spec.name == "fastocr";
    for (const SeedRun& s : run.seeds) {
        std::size_t previous_positions = 0;
        std::size_t previous_unreachable = 0;
        for (const StepRecord& rec : s.records) {
            if (rec.layers.size() != num_layers) {
                broken("every step records exactly one entry per layer", s.seed, rec.step);
            }
            if (previous_positions != 0 && rec.num_positions != previous_positions + 1) {
                broken("cache length grows by exactly one position per step", s.seed, rec.step);
            }
            previous_positions = rec.num_positions;
            if (rec.unreachable < previous_unreachable) {
                broken("evicted positions never return", s.seed, rec.step);
            }
            previous_unreachable = rec.unreachable;

            for (const LayerRecord& lr : rec.layers) {
                if (lr.attended.empty() || !std::is_sorted(lr.attended.begin(), lr.attended.end()) ||
                    lr.attended.back() >= rec.num_positions) {
                    broken("attended positions are a non-empty ascending subset of the cache", s.seed, rec.step);
                }
                if (!(lr.image_ratio >= 0.0 && lr.image_ratio <= 1.0)) {
                    broken("image attention ratio lies in [0, 1]", s.seed, rec.step);
                }
            }

            if (run.spec.name == "vanilla") {
                for (const LayerRecord& lr : rec.layers) {
                    if (lr.mode != AttentionMode::Full || lr.attended.size() != rec.num_positions) {
                        broken("vanilla attends the full context at every layer", s.seed, rec.step);
                    }
                }
            }
            if (!fixation_policy) {
                continue;
            }
            if (rec.unreachable != 0) {
                broken("the fixation policy never evicts", s.seed, rec.step);
            }
            if (rec.phase == Phase::Warmup) {
                for (const LayerRecord& lr : rec.layers) {
                    if (lr.mode != AttentionMode::Full || lr.attended.size() != rec.num_positions) {
                        broken("warmup steps attend the full context", s.seed, rec.step);
                    }
                }
                continue;
            }
            std::vector<std::size_t> text;
            for (std::size_t p = 0; p < rec.num_positions; ++p) {
                if (!std::binary_search(rec.image_positions.begin(), rec.image_positions.end(), p)) {
                    text.push_back(p);
                }
            }
            const std::size_t kept_images =
                fixation::focal_token_count(run.spec.fixation.kept_token_ratio, rec.image_positions.size());
            for (std::size_t l = 0; l < rec.layers.size(); ++l) {
                const LayerRecord& lr = rec.layers[l];
                const bool focal = std::binary_search(rec.focal_layers.begin(), rec.focal_layers.end(), l);
                if (focal && (lr.mode != AttentionMode::Full || lr.attended.size() != rec.num_positions)) {
                    broken("focal layers attend the full context", s.seed, rec.step);
                }
                if (lr.mode != AttentionMode::Gathered) {
                    continue;
                }
                if (!std::includes(lr.attended.begin(), lr.attended.end(), text.begin(), text.end())) {
                    broken("every kept set contains all text positions", s.seed, rec.step);
                }
                if (lr.attended.size() - text.size() != kept_images) {
                    broken("every kept set holds min(ceil(kappa * N_img), N_img) image positions", s.seed, rec.step);
                }
            }
            if (!rec.focal_layers.empty()) {
                const LayerRecord& deepest = rec.layers[rec.focal_layers.back()];
                if (!rec.f_last || !deepest.focal_tokens || *rec.f_last != *deepest.focal_tokens) {
                    broken("carried tokens equal the deepest focal layer's tokens", s.seed, rec.step);
                }
            }
        }
    }
}

report::PolicyEntry summarize(const PolicyRun& run, const PolicyRun* reference, std::uint64_t hidden_dim,
                              std::size_t num_layers) {
    report::PolicyEntry e;
    e.label = run.spec.label;
    e.policy = run.spec.name;
    e.parameters = run.spec.parameters();

    const bool has_tokens = reference != nullptr && !run.seeds.empty() && !run.seeds.front().tokens.empty();
    e.has_reference = has_tokens;

    double flops_sum = 0.0;
    double context_sum = 0.0;
    double reference_sum = 0.0;
    std::vector<std::vector<std::size_t>> focal_sets;
    for (std::size_t i = 0; i < run.seeds.size(); ++i) {
        const SeedRun& s = run.seeds[i];
        if (has_tokens) {
            const SeedRun& r = reference->seeds.at(i);
            e.agreement.push_back({s.seed, metrics::prefix_agreement(s.tokens, r.tokens),
                                   metrics::token_match_rate(s.tokens, r.tokens)});
        }
        const metrics::AttentionSummary a = metrics::summarize_attention(s.records);
        e.attention.gathered_recall.merge(a.gathered_recall);
        e.attention.inherited_recall.merge(a.inherited_recall);
        e.attention.focal_recall.merge(a.focal_recall);
        e.attention.carried_jaccard.merge(a.carried_jaccard);
        e.attention.image_ratio.merge(a.image_ratio);
        e.attention.has_oracle = e.attention.has_oracle || a.has_oracle;

        const flops::MeasuredFlops m = flops::measured_breakdown(s.records, hidden_dim);
        flops_sum += m.mean_total;
        context_sum += m.mean_context;
        if (reference != nullptr) {
            reference_sum += flops::measured_breakdown(reference->seeds.at(i).records, hidden_dim).mean_total;
        }
        focal_sets.push_back(s.focal_layers);
    }
    if (!run.seeds.empty()) {
        const auto n = static_cast<double>(run.seeds.size());
        e.mean_step_flops = flops_sum / n;
        e.mean_context = context_sum / n;
        e.reference_step_flops = reference_sum / n;
    }
    if (run.spec.name == "fastocr" && !focal_sets.empty()) {
        e.focal = metrics::focal_layer_frequency(focal_sets, num_layers);
    }
    return e;
}

std::vector<report::RatioRow> ratio_rows(const PolicyRun& run) {
    std::map<std::pair<std::size_t, std::size_t>, metrics::Accumulator> cells;
    for (const SeedRun& s : run.seeds) {
        for (const StepRecord& rec : s.records) {
            for (std::size_t l = 0; l < rec.layers.size(); ++l) {
                const LayerRecord& lr = rec.layers[l];
                double ratio = lr.image_ratio;
                if (lr.oracle_weights) {
                    const Vec& w = *lr.oracle_weights;
                    double image = 0.0;
                    for (std::size_t p : rec.image_positions) {
                        image += w[p];
                    }
                    const double total = std::accumulate(w.begin(), w.end(), 0.0);
                    ratio = total > 0.0 ? image / total : 0.0;
                }
                cells[{rec.step, l}].add(ratio);
            }
        }
    }
    std::vector<report::RatioRow> rows;
    rows.reserve(cells.size());
    for (const auto& [key, acc] : cells) {
        rows.push_back({key.first, key.second, acc.mean()});
    }
    return rows;
}

BudgetPoint budget_point(const RunConfig& cfg, const PolicySpec& fastocr_spec) {
    BudgetPoint b;
    b.num_layers = cfg.num_layers();
    std::size_t text = 0;
    if (cfg.workload == Workload::Planted) {
        b.n_img = cfg.planted.num_image_tokens;
        text = cfg.planted.num_text_tokens;
    } else {
        b.n_img = cfg.image_tokens;
        text = cfg.text_tokens;
    }
    text += (cfg.steps + 1) / 2;
    b.s_full = b.n_img + text;
    const auto& fx = fastocr_spec.fixation;
    b.n_focal = fx.forced_focal_layers ? fx.forced_focal_layers->size()
                                       : fixation::focal_budget(fx.focal_layer_ratio, b.num_layers);
    b.n_focal = std::min(b.n_focal, b.num_layers);
    b.s_pruned = text + fixation::focal_token_count(fx.kept_token_ratio, b.n_img);
    return b;
}

CommandResult cmd_run(const RunConfig& cfg) {
    const bool instrumented = cfg.instrumented || (cfg.trace_out_path && cfg.workload == Workload::Toy);
    return single_policy(cfg, "run", instrumented);
}

CommandResult cmd_profile(const RunConfig& cfg) { return single_policy(cfg, "profile", true); }

CommandResult cmd_replay(const RunConfig& cfg) {
    if (cfg.workload != Workload::Trace) {
        throw config::ConfigError("replay needs workload 'trace' with a trace path");
    }
    return single_policy(cfg, "replay", true);
}

CommandResult cmd_compare(const RunConfig& cfg) {
    const std::size_t layers = cfg.num_layers();
    const bool instrumented = cfg.instrumented;

    std::vector<PolicySpec> specs;
    const PolicySpec base_fastocr = spec_from_config(cfg, "fastocr");
    for (const std::string& name : cfg.compare_policies) {
        PolicySpec spec = spec_from_config(cfg, name);
        if (name == "vanilla") {
            continue;
        }
        if (cfg.match_budget && cfg.workload != Workload::Trace) {
            const BudgetPoint b = budget_point(cfg, base_fastocr);
            if (name == "fastv") {
                spec.fastv.prune_ratio = baseline::match_fastv_ratio(b.num_layers, spec.fastv.prune_layer, b.n_img,
                                                                     b.s_full, b.n_focal, b.s_pruned);
                spec.label = ratio_label("fastv", spec.fastv.prune_ratio);
            } else if (name == "h2o") {
                spec.h2o.retain_ratio = baseline::match_h2o_ratio(b.num_layers, b.s_full, b.n_focal, b.s_pruned);
                spec.label = ratio_label("h2o", spec.h2o.retain_ratio);
            }
        }
        specs.push_back(std::move(spec));
    }
    for (double kappa : cfg.compare_kappas) {
        PolicySpec spec = base_fastocr;
        spec.fixation.kept_token_ratio = kappa;
        spec.label = fmt::format("fastocr[kappa={}]", kappa);
        specs.push_back(std::move(spec));
    }

    const PolicyRun reference = execute(cfg, spec_from_config(cfg, "vanilla"), instrumented);
    check_invariants(reference, layers);

    CommandResult out;
    out.report = base_report(cfg, "compare", instrumented);
    out.report.entries.push_back(summarize(reference, &reference, cfg.model.hidden_dim, layers));
    for (const PolicySpec& spec : specs) {
        const PolicyRun run = execute(cfg, spec, instrumented);
        check_invariants(run, layers);
        out.report.entries.push_back(summarize(run, &reference, cfg.model.hidden_dim, layers));
    }
    out.report.ratio_rows = ratio_rows(reference);
    return out;
}

std::string write_outputs(const RunConfig& cfg, const CommandResult& result) {
    const report::Json doc = report::to_json(result.report);
    report::validate_report(doc);
    const std::string text = doc.dump(2) + "\n";
    if (cfg.report_path) {
        report::write_atomic(*cfg.report_path, text);
        spdlog::info("report written to {}", cfg.report_path->string());
    }
    if (cfg.csv_path) {
        report::emit_report(result.report, report::Format::Csv, *cfg.csv_path);
        spdlog::info("ratio table written to {}", cfg.csv_path->string());
    }
    if (cfg.trace_out_path && result.trace) {
        trace::write_trace(*result.trace, *cfg.trace_out_path);
        spdlog::info("trace written to {}", cfg.trace_out_path->string());
    }
    return text;
}

}  // namespace fastocr::experiment
