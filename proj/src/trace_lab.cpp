// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/trace_lab.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>

#include "fastocr/fixation_policy.hpp"

namespace fastocr::trace {

namespace {

constexpr std::string_view kMagic = "#trace v1";

double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

bool is_focal_like(const PlantedConfig& cfg, std::size_t layer) {
    return std::find(cfg.focal_like_layers.begin(), cfg.focal_like_layers.end(), layer) !=
           cfg.focal_like_layers.end();
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
    throw TraceError(fmt::format("trace line {}: {}", line, msg));
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::size_t parse_size_field(std::string_view token, std::string_view key, std::size_t line) {
    if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=') {
        fail(line, fmt::format("expected field '{}=', got '{}'", key, token));
    }
    std::size_t v = 0;
    if (!parse_number(token.substr(key.size() + 1), v)) {
        fail(line, fmt::format("field '{}' is not a non-negative integer", key));
    }
    return v;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = text.find(sep, start);
        out.push_back(text.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) {
            return out;
        }
        start = at + 1;
    }
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    return s;
}

/// Replays recorded weights. Positions are typed by the cache; keys and values are placeholders.
class ReplayExecutor : public LayerExecutor {
public:
    ReplayExecutor(kv::SessionCache& cache, const std::vector<Vec>& layers) : m_cache(cache), m_layers(layers) {}

    Outcome attend(std::size_t layer, std::span<const std::size_t> positions) override {
        touch(layer);
        const Vec& w = m_layers.at(layer);
        Outcome out;
        out.head_avg.reserve(positions.size());
        double sum = 0.0;
        for (std::size_t p : positions) {
            if (p >= w.size()) {
                throw std::out_of_range(fmt::format("replay: position {} beyond recorded context {}", p, w.size()));
            }
            out.head_avg.push_back(w[p]);
            sum += w[p];
        }
        if (!(sum > 0.0)) {
            throw TraceError(fmt::format("replay: attended positions carry no weight at layer {}", layer));
        }
        for (double& v : out.head_avg) {
            v /= sum;
        }
        return out;
    }

    Vec shadow_full(std::size_t layer) override {
        touch(layer);
        return m_layers.at(layer);
    }

private:
    void touch(std::size_t layer) {
        while (m_cache.layer_length(layer) < m_cache.num_positions()) {
            m_cache.append(layer, Vec{0.0}, Vec{0.0});
        }
    }

    kv::SessionCache& m_cache;
    const std::vector<Vec>& m_layers;
};

}  // namespace

void PlantedConfig::validate() const {
    if (num_layers == 0 || num_image_tokens == 0) {
        throw std::invalid_argument("planted trace needs at least one layer and one image token");
    }
    if (num_text_tokens == 0) {
        throw std::invalid_argument("planted trace needs at least one prompt text token");
    }
    for (std::size_t l : focal_like_layers) {
        if (l >= num_layers) {
            throw std::invalid_argument(fmt::format("focal-like layer {} out of range", l));
        }
    }
    for (double mu : {image_mass_focal, image_mass_nonfocal}) {
        if (!(mu > 0.0 && mu < 1.0)) {
            throw std::invalid_argument("image masses must lie in (0, 1)");
        }
    }
    if (!(noise >= 0.0 && noise < 1.0)) {
        throw std::invalid_argument("noise must lie in [0, 1)");
    }
    if (!(window_sigma >= 0.0) || !std::isfinite(window_center) || !std::isfinite(drift)) {
        throw std::invalid_argument("window parameters must be finite and sigma non-negative");
    }
}

std::size_t PlantedTrace::context_length(std::size_t step_index) const {
    return config.num_image_tokens + config.num_text_tokens + step_index + 1;
}

PlantedTrace generate_trace(const PlantedConfig& config) {
    config.validate();
    const std::size_t n_img = config.num_image_tokens;
    const double last = static_cast<double>(n_img - 1);
    std::mt19937_64 rng(config.seed);

    PlantedTrace out;
    out.config = config;
    out.weights.resize(config.num_steps);
    for (std::size_t s = 0; s < config.num_steps; ++s) {
        const double center = std::clamp(config.window_center + static_cast<double>(s) * config.drift, 0.0, last);
        out.centers.push_back(center);

        Vec window(n_img, 0.0);
        if (config.window_sigma > 0.0) {
            const double denom = 2.0 * config.window_sigma * config.window_sigma;
            for (std::size_t p = 0; p < n_img; ++p) {
                const double dp = static_cast<double>(p) - center;
                window[p] = std::exp(-dp * dp / denom);
            }
        }
        double window_sum = std::accumulate(window.begin(), window.end(), 0.0);
        if (!(window_sum > 0.0)) {
            // sigma == 0, or every Gaussian term underflowed
            window[static_cast<std::size_t>(std::lround(center))] = 1.0;
            window_sum = 1.0;
        }

        const std::size_t ctx = out.context_length(s);
        const std::size_t n_text = ctx - n_img;
        out.weights[s].reserve(config.num_layers);
        for (std::size_t l = 0; l < config.num_layers; ++l) {
            Vec noise(n_img, 0.0);
            double noise_sum = 0.0;
            if (config.noise > 0.0) {
                for (double& u : noise) {
                    u = unit_draw(rng);
                    noise_sum += u;
                }
            }
            const double mu = is_focal_like(config, l) ? config.image_mass_focal : config.image_mass_nonfocal;
            Vec w(ctx, (1.0 - mu) / static_cast<double>(n_text));
            for (std::size_t p = 0; p < n_img; ++p) {
                double share = (1.0 - config.noise) * window[p] / window_sum;
                if (noise_sum > 0.0) {
                    share += config.noise * noise[p] / noise_sum;
                }
                w[p] = mu * share;
            }
            out.weights[s].push_back(std::move(w));
        }
    }
    return out;
}

void TraceFile::validate() const {
    if (num_layers == 0) {
        throw TraceError("trace declares zero layers");
    }
    for (std::size_t s = 0; s < steps.size(); ++s) {
        if (steps[s].size() != num_layers) {
            throw TraceError(fmt::format("step {} has {} layers, expected {}", s + 1, steps[s].size(), num_layers));
        }
        for (std::size_t l = 0; l < num_layers; ++l) {
            if (steps[s][l].size() != context_length(s + 1)) {
                throw TraceError(fmt::format("step {} layer {}: {} weights, expected {}", s + 1, l,
                                             steps[s][l].size(), context_length(s + 1)));
            }
        }
    }
}

TraceFile to_trace_file(const PlantedTrace& trace) {
    TraceFile out;
    out.num_layers = trace.config.num_layers;
    out.num_image_tokens = trace.config.num_image_tokens;
    out.num_text_tokens = trace.config.num_text_tokens;
    out.source = "planted";
    out.steps = trace.weights;
    return out;
}

TraceFile trace_from_records(std::span<const StepRecord> records, std::size_t num_layers,
                             std::size_t num_image_tokens, std::size_t num_text_tokens) {
    TraceFile out;
    out.num_layers = num_layers;
    out.num_image_tokens = num_image_tokens;
    out.num_text_tokens = num_text_tokens;
    out.source = "toy-model";
    for (const StepRecord& rec : records) {
        std::vector<Vec> layers;
        for (const LayerRecord& lr : rec.layers) {
            if (!lr.oracle_weights) {
                throw std::invalid_argument("trace dumping requires an instrumented run");
            }
            layers.push_back(*lr.oracle_weights);
        }
        out.steps.push_back(std::move(layers));
    }
    out.validate();
    return out;
}

void write_trace(const TraceFile& trace, std::ostream& out) {
    trace.validate();
    out << fmt::format("{} L={} Nimg={} Ntext={} source={}\n", kMagic, trace.num_layers, trace.num_image_tokens,
                       trace.num_text_tokens, trace.source);
    std::string line;
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        for (std::size_t l = 0; l < trace.num_layers; ++l) {
            line = fmt::format("t={} l={} w=", s + 1, l);
            const Vec& w = trace.steps[s][l];
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (i > 0) {
                    line += ',';
                }
                fmt::format_to(std::back_inserter(line), "{:.17g}", w[i]);
            }
            line += '\n';
            out << line;
        }
    }
    if (!out) {
        throw std::runtime_error("failed writing trace");
    }
}

void write_trace(const TraceFile& trace, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        }
        write_trace(trace, out);
    }
    std::filesystem::rename(tmp, path);
}

TraceFile read_trace(std::istream& in) {
    TraceFile trace;
    std::string raw;
    std::size_t line_no = 0;

    if (!std::getline(in, raw)) {
        fail(1, "empty trace (missing header)");
    }
    ++line_no;
    {
        const std::string_view header = trim(raw);
        if (header.substr(0, kMagic.size()) != kMagic) {
            fail(line_no, "malformed header: expected '#trace v1'");
        }
        const auto fields = split(trim(header.substr(kMagic.size())), ' ');
        if (fields.size() != 4) {
            fail(line_no, "malformed header: expected L, Nimg, Ntext and source fields");
        }
        trace.num_layers = parse_size_field(fields[0], "L", line_no);
        trace.num_image_tokens = parse_size_field(fields[1], "Nimg", line_no);
        trace.num_text_tokens = parse_size_field(fields[2], "Ntext", line_no);
        if (fields[3].substr(0, 7) != "source=" || fields[3].size() == 7) {
            fail(line_no, "malformed header: missing source tag");
        }
        trace.source = std::string(fields[3].substr(7));
        if (trace.num_layers == 0) {
            fail(line_no, "header declares zero layers");
        }
    }

    std::size_t expect_step = 1;
    std::size_t expect_layer = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty()) {
            continue;
        }
        const auto fields = split(line, ' ');
        if (fields.size() != 3) {
            fail(line_no, "expected 't=<int> l=<int> w=<weights>'");
        }
        const std::size_t t = parse_size_field(fields[0], "t", line_no);
        const std::size_t l = parse_size_field(fields[1], "l", line_no);
        if (t != expect_step || l != expect_layer) {
            if (t < expect_step || (t == expect_step && l < expect_layer)) {
                fail(line_no, fmt::format("duplicate or out-of-order record t={} l={}", t, l));
            }
            fail(line_no, fmt::format("grid gap: expected t={} l={}, got t={} l={}", expect_step, expect_layer, t, l));
        }
        if (l >= trace.num_layers) {
            fail(line_no, fmt::format("t={} l={}: layer exceeds declared L={}", t, l, trace.num_layers));
        }
        if (fields[2].substr(0, 2) != "w=") {
            fail(line_no, fmt::format("t={} l={}: missing 'w=' field", t, l));
        }
        const auto values = split(fields[2].substr(2), ',');
        const std::size_t expected_len = trace.context_length(t);
        if (values.size() != expected_len) {
            fail(line_no, fmt::format("t={} l={}: {} weights, expected {}", t, l, values.size(), expected_len));
        }
        Vec w(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!parse_number(values[i], w[i]) || !std::isfinite(w[i]) || w[i] < 0.0) {
                fail(line_no, fmt::format("t={} l={}: weight {} is not a finite non-negative number", t, l, i));
            }
        }
        if (l == 0) {
            trace.steps.emplace_back();
        }
        trace.steps.back().push_back(std::move(w));
        if (++expect_layer == trace.num_layers) {
            expect_layer = 0;
            ++expect_step;
        }
    }
    if (expect_layer != 0) {
        fail(line_no, fmt::format("truncated trace: step {} stops after layer {}", expect_step, expect_layer - 1));
    }
    return trace;
}

TraceFile read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TraceError("cannot open trace " + path.string());
    }
    return read_trace(in);
}

std::vector<StepRecord> replay(const TraceFile& trace, DecodePolicy& policy, ReplayOptions options) {
    trace.validate();
    std::size_t steps = trace.num_steps();
    if (options.max_steps != 0) {
        steps = std::min(steps, options.max_steps);
    }
    if (const auto* fixation_policy = dynamic_cast<const fixation::FixationPolicy*>(&policy)) {
        if (steps < fixation_policy->state().config.warmup_steps) {
            throw TraceError(fmt::format("insufficient warmup data: trace has {} steps, warmup needs {}", steps,
                                         fixation_policy->state().config.warmup_steps));
        }
    }

    kv::SessionCache cache(trace.num_layers, 1);
    policy.on_session_start(cache);
    for (std::size_t i = 0; i < trace.num_image_tokens; ++i) {
        cache.register_token(kv::TokenType::Image);
    }
    for (std::size_t i = 0; i < trace.num_text_tokens; ++i) {
        cache.register_token(kv::TokenType::Text);
    }
    for (std::size_t l = 0; l < trace.num_layers; ++l) {
        for (std::size_t p = 0; p < cache.num_positions(); ++p) {
            cache.append(l, Vec{0.0}, Vec{0.0});
        }
    }

    std::vector<StepRecord> records;
    records.reserve(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        cache.register_token(kv::TokenType::Text);
        ReplayExecutor exec(cache, trace.steps[s]);
        records.push_back(policy.step(cache, exec, options.instrumented));
    }
    spdlog::debug("replayed {} steps of a {} trace with policy {}", steps, trace.source, policy.name());
    return records;
}

}  // namespace fastocr::trace
