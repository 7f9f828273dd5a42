// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/transition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace idstream {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

int window_length(std::span<const float> old_embed, std::span<const float> new_embed,
                  const APTConfig& config) {
    if (old_embed.size() != new_embed.size() || old_embed.empty()) {
        throw std::invalid_argument("window_length: embedding dimension mismatch");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < old_embed.size(); ++i) {
        dot += static_cast<double>(old_embed[i]) * new_embed[i];
        na += static_cast<double>(old_embed[i]) * old_embed[i];
        nb += static_cast<double>(new_embed[i]) * new_embed[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("window_length: zero embedding");
    double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    double delta = std::clamp(1.0 - cosine, 0.0, 1.0);
    double raw = config.w_min + delta * (config.w_max - config.w_min);
    // Nearest chunk boundary, half-up.
    int snapped = static_cast<int>(std::floor(raw / config.chunk_size + 0.5)) * config.chunk_size;
    return std::clamp(snapped, config.w_min, config.w_max);
}

double alpha(double tau, int w_apt, const APTConfig& config) {
    if (tau < 0.0) throw std::invalid_argument("alpha: negative tau");
    if (w_apt < 1) throw std::invalid_argument("alpha: w_apt < 1");
    if (tau < config.d_delay) return 0.0;
    if (tau >= config.d_delay + w_apt) return 1.0;
    return 0.5 * (1.0 - std::cos(kPi * (tau - config.d_delay) / w_apt));
}

KvBlocks blend_kv(const KvBlocks& old_blocks, const KvBlocks& new_blocks, double alpha_value) {
    if (!same_layout(old_blocks, new_blocks)) {
        throw std::invalid_argument("blend_kv: conditioning shape mismatch");
    }
    if (alpha_value == 0.0) return old_blocks;
    if (alpha_value == 1.0) return new_blocks;
    KvBlocks out = old_blocks;
    for (std::size_t l = 0; l < out.size(); ++l) {
        for (std::size_t i = 0; i < out[l].keys.data.size(); ++i) {
            out[l].keys.data[i] = static_cast<float>((1.0 - alpha_value) * old_blocks[l].keys.data[i] +
                                                     alpha_value * new_blocks[l].keys.data[i]);
            out[l].values.data[i] =
                static_cast<float>((1.0 - alpha_value) * old_blocks[l].values.data[i] +
                                   alpha_value * new_blocks[l].values.data[i]);
        }
    }
    return out;
}

KvBlocks blend_kv(const APTState& state, double alpha_value) {
    return blend_kv(state.old_blocks, state.new_blocks, alpha_value);
}

APTState begin_transition(const KvBlocks& current_kv, std::span<const float> new_embed,
                          std::span<const float> old_embed, const APTConfig& config) {
    APTState state;
    state.old_blocks = current_kv;
    state.w_apt = window_length(old_embed, new_embed, config);
    state.tau = 0.0;
    state.active = true;
    return state;
}

void set_new_conditioning(APTState& state, KvBlocks blocks) {
    state.new_blocks = std::move(blocks);
    state.new_ready = true;
}

KvBlocks effective_conditioning(const APTState& state, const APTConfig& config) {
    if (!state.active) {
        return state.new_ready ? state.new_blocks : state.old_blocks;
    }
    double a = alpha(state.tau, state.w_apt, config);
    if (a == 0.0 || !state.new_ready) return state.old_blocks;
    return blend_kv(state, a);
}

void advance_transition(APTState& state, int latent_frames, const APTConfig& config) {
    if (!state.active) return;
    state.tau += latent_frames;
    if (state.tau > config.d_delay + state.w_apt) state.active = false;
}

}  // namespace idstream
