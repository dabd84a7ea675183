// Copyright (C) 2026 The fastocr-sim Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastocr/toy_model.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace fastocr::toy {

namespace {

constexpr std::uint64_t kPatchSeedMix = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kPromptSeedMix = 0xD1B54A32D192ED03ULL;

double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Matrix draw_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.data.resize(rows * cols);
    for (double& v : m.data) {
        v = (2.0 * unit_draw(rng) - 1.0) * scale;
    }
    return m;
}

void add_into(Vec& acc, std::span<const double> x) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        acc[i] += x[i];
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (num_layers == 0) {
        throw std::invalid_argument("model needs at least one layer");
    }
    if (num_heads == 0 || hidden_dim == 0 || hidden_dim % num_heads != 0) {
        throw std::invalid_argument("hidden_dim " + std::to_string(hidden_dim) + " is not divisible by num_heads " +
                                    std::to_string(num_heads));
    }
    if (vocab_size < 2) {
        throw std::invalid_argument("vocab_size must be at least 2");
    }
    if (patch_dim == 0) {
        throw std::invalid_argument("patch_dim must be positive");
    }
}

Vec matvec(std::span<const double> x, const Matrix& w, std::uint64_t* multiply_adds) {
    if (x.size() != w.rows) {
        throw std::invalid_argument("matvec: input length " + std::to_string(x.size()) + " does not match " +
                                    std::to_string(w.rows) + " rows");
    }
    Vec y(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double xr = x[r];
        const auto row = w.row(r);
        for (std::size_t c = 0; c < w.cols; ++c) {
            y[c] += xr * row[c];
        }
    }
    if (multiply_adds != nullptr) {
        *multiply_adds += static_cast<std::uint64_t>(w.rows) * w.cols;
    }
    return y;
}

ModelWeights init_model(const ModelConfig& config) {
    config.validate();
    const std::size_t h = config.hidden_dim;
    const double scale = std::sqrt(3.0 / static_cast<double>(h));
    std::mt19937_64 rng(config.seed);

    ModelWeights w;
    w.config = config;
    w.layers.reserve(config.num_layers);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
        LayerWeights lw;
        lw.w_q = draw_matrix(rng, h, h, scale);
        lw.w_k = draw_matrix(rng, h, h, scale);
        lw.w_v = draw_matrix(rng, h, h, scale);
        lw.w_o = draw_matrix(rng, h, h, scale);
        w.layers.push_back(std::move(lw));
    }
    w.embedding = draw_matrix(rng, config.vocab_size, h, scale);
    w.unembedding = draw_matrix(rng, h, config.vocab_size, scale);
    w.patch_embedder = draw_matrix(rng, config.patch_dim, h, scale);
    return w;
}

Vec position_signal(std::size_t position, std::size_t hidden_dim) {
    Vec pe(hidden_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    const auto pos = static_cast<double>(position);
    for (std::size_t i = 0; i < hidden_dim; ++i) {
        const auto pair = static_cast<double>(i / 2 * 2);
        const double angle = pos / std::pow(10000.0, pair / static_cast<double>(hidden_dim));
        pe[i] = scale * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
    return pe;
}

std::vector<Vec> patch_descriptors(std::uint64_t seed, std::size_t num_patches, std::size_t patch_dim) {
    std::mt19937_64 rng(seed ^ kPatchSeedMix);
    std::vector<Vec> out(num_patches, Vec(patch_dim));
    for (Vec& d : out) {
        for (double& v : d) {
            v = 2.0 * unit_draw(rng) - 1.0;
        }
    }
    return out;
}

std::vector<TokenId> synthetic_prompt(std::uint64_t seed, std::size_t length, std::size_t vocab_size) {
    if (vocab_size == 0) {
        throw std::invalid_argument("vocab_size must be positive");
    }
    std::mt19937_64 rng(seed ^ kPromptSeedMix);
    std::vector<TokenId> out(length);
    for (TokenId& t : out) {
        t = static_cast<TokenId>(rng() % vocab_size);
    }
    return out;
}

TokenId argmax(std::span<const double> logits) {
    if (logits.empty()) {
        throw std::invalid_argument("argmax of empty logits");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    return static_cast<TokenId>(best);
}

/// Live executor for one decode step: projects the residual lazily per layer and appends K/V on first touch.
class DecodeSession::Executor : public LayerExecutor {
public:
    Executor(DecodeSession& session, Vec x) : m_session(session), m_x(std::move(x)) {}

    Outcome attend(std::size_t layer, std::span<const std::size_t> positions) override {
        prepare(layer);
        if (m_attended) {
            throw std::logic_error("layer " + std::to_string(layer) + " attended twice in one step");
        }
        const kv::LayerCache& lc = m_session.m_cache.layer(layer);
        attn::AttentionResult res = attn::attend_gathered(m_query, lc.keys, lc.values, positions, m_session.m_heads);
        std::uint64_t macs = m_projection_macs + res.multiply_adds;
        add_into(m_x, matvec(res.output, m_session.m_weights->layers[layer].w_o, &macs));
        m_attended = true;
        return {std::move(res.weights.head_avg), macs};
    }

    Vec shadow_full(std::size_t layer) override {
        prepare(layer);
        if (m_attended) {
            throw std::logic_error("shadow pass after layer " + std::to_string(layer) + " was attended");
        }
        const kv::LayerCache& lc = m_session.m_cache.layer(layer);
        std::vector<std::size_t> all(lc.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return attn::attend_gathered(m_query, lc.keys, lc.values, all, m_session.m_heads).weights.head_avg;
    }

    void finish() const {
        if (m_layer != m_session.m_cache.num_layers() - 1 || !m_attended) {
            throw std::logic_error("policy did not attend every layer exactly once");
        }
    }

    const Vec& hidden() const { return m_x; }

private:
    void prepare(std::size_t layer) {
        if (m_started && layer == m_layer) {
            return;
        }
        const std::size_t expected = m_started ? m_layer + 1 : 0;
        if (layer != expected || (m_started && !m_attended)) {
            throw std::logic_error("layers must be attended in ascending order; got layer " + std::to_string(layer));
        }
        const LayerWeights& lw = m_session.m_weights->layers[layer];
        m_projection_macs = 0;
        m_query = matvec(m_x, lw.w_q, &m_projection_macs);
        Vec key = matvec(m_x, lw.w_k, &m_projection_macs);
        Vec value = matvec(m_x, lw.w_v, &m_projection_macs);
        m_session.m_cache.append(layer, std::move(key), std::move(value));
        m_layer = layer;
        m_started = true;
        m_attended = false;
    }

    DecodeSession& m_session;
    Vec m_x;
    Vec m_query;
    std::uint64_t m_projection_macs = 0;
    std::size_t m_layer = 0;
    bool m_started = false;
    bool m_attended = false;
};

DecodeSession::DecodeSession(std::shared_ptr<const ModelWeights> weights, std::unique_ptr<DecodePolicy> policy,
                             SessionOptions options)
    : m_weights(std::move(weights)),
      m_policy(std::move(policy)),
      m_options(options),
      m_cache(m_weights ? m_weights->config.num_layers : 0, m_weights ? m_weights->config.hidden_dim : 0),
      m_heads(m_weights->config.heads()) {
    if (!m_policy) {
        throw std::invalid_argument("decode session needs a policy");
    }
}

Vec DecodeSession::embed_token(TokenId token, std::size_t position) const {
    const ModelConfig& cfg = m_weights->config;
    if (token < 0 || static_cast<std::size_t>(token) >= cfg.vocab_size) {
        throw std::out_of_range("token id " + std::to_string(token) + " outside the vocabulary");
    }
    const auto row = m_weights->embedding.row(static_cast<std::size_t>(token));
    Vec x(row.begin(), row.end());
    add_into(x, position_signal(position, cfg.hidden_dim));
    return x;
}

void DecodeSession::prefill_position(Vec x, kv::TokenType type, std::vector<double>* layer_ratios) {
    const std::size_t pos = m_cache.register_token(type);
    std::vector<std::size_t> causal(pos + 1);
    std::iota(causal.begin(), causal.end(), std::size_t{0});
    for (std::size_t l = 0; l < m_cache.num_layers(); ++l) {
        const LayerWeights& lw = m_weights->layers[l];
        Vec q = matvec(x, lw.w_q);
        m_cache.append(l, matvec(x, lw.w_k), matvec(x, lw.w_v));
        const kv::LayerCache& lc = m_cache.layer(l);
        attn::AttentionResult res = attn::attend_gathered(q, lc.keys, lc.values, causal, m_heads);
        if (layer_ratios != nullptr) {
            layer_ratios->push_back(image_ratio_of(m_cache, causal, res.weights.head_avg));
        }
        add_into(x, matvec(res.output, lw.w_o));
    }
    m_prefill_hidden = std::move(x);
}

void DecodeSession::prefill(std::size_t num_image_tokens, std::span<const TokenId> prompt) {
    if (m_prefilled) {
        throw std::logic_error("session already prefilled");
    }
    if (prompt.empty()) {
        throw std::invalid_argument("prefill requires a non-empty prompt");
    }
    if (num_image_tokens == 0 && m_policy->name() == "fastocr") {
        spdlog::warn("prefill without image tokens: the fixation policy degenerates to text-only attention");
    }
    const ModelConfig& cfg = m_weights->config;
    m_policy->on_session_start(m_cache);

    const auto patches = patch_descriptors(cfg.seed, num_image_tokens, cfg.patch_dim);
    for (std::size_t i = 0; i < num_image_tokens; ++i) {
        Vec x = matvec(patches[i], m_weights->patch_embedder);
        add_into(x, position_signal(i, cfg.hidden_dim));
        prefill_position(std::move(x), kv::TokenType::Image, nullptr);
    }
    std::vector<double> last_ratios;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        const bool last = i + 1 == prompt.size();
        prefill_position(embed_token(prompt[i], m_cache.num_positions()), kv::TokenType::Text,
                         last ? &last_ratios : nullptr);
    }
    m_policy->observe_prefill(last_ratios);
    m_next_input = argmax(matvec(m_prefill_hidden, m_weights->unembedding));
    m_prefill_length = m_cache.num_positions();
    m_prefilled = true;
    spdlog::debug("prefill done: {} image + {} text positions, first input {}", num_image_tokens, prompt.size(),
                  m_next_input);
}

TokenId DecodeSession::decode_step() {
    if (!m_prefilled) {
        throw std::logic_error("decode_step before prefill");
    }
    const std::size_t pos = m_cache.register_token(kv::TokenType::Text);
    Executor exec(*this, embed_token(m_next_input, pos));
    StepRecord rec = m_policy->step(m_cache, exec, m_options.instrumented);
    exec.finish();
    Vec logits = matvec(exec.hidden(), m_weights->unembedding);
    const TokenId token = argmax(logits);
    m_generated.push_back(token);
    m_records.push_back(std::move(rec));
    m_logits.push_back(std::move(logits));
    m_next_input = token;
    return token;
}

std::vector<TokenId> DecodeSession::generate(std::size_t n_steps) {
    std::vector<TokenId> out;
    out.reserve(n_steps);
    for (std::size_t i = 0; i < n_steps; ++i) {
        out.push_back(decode_step());
    }
    return out;
}

}  // namespace fastocr::toy
