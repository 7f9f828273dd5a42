// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "idstream/kv.hpp"

namespace idstream {

struct APTConfig {
    int w_min = 3;      // latent frames
    int w_max = 15;
    int d_delay = 3;
    int chunk_size = 3;
};

/// Transition bookkeeping: frames elapsed since the switch, the adaptive
/// window, and the snapshot/target conditioning blocks.
struct APTState {
    double tau = 0.0;
    int w_apt = 0;
    KvBlocks old_blocks;
    KvBlocks new_blocks;
    bool new_ready = false;   // target conditioning is lazily initialized
    bool active = false;
};

/// Adaptive window from the clipped cosine distance of the prompt
/// embeddings, snapped to the nearest chunk boundary (half-up) and clamped
/// to [w_min, w_max]. Zero-length or zero-vector embeddings are a hard error.
int window_length(std::span<const float> old_embed, std::span<const float> new_embed,
                  const APTConfig& config);

/// Delayed cosine schedule: 0 before d_delay, 1 after d_delay + w_apt.
double alpha(double tau, int w_apt, const APTConfig& config);

/// Elementwise (1-alpha)*old + alpha*new over keys and values.
KvBlocks blend_kv(const KvBlocks& old_blocks, const KvBlocks& new_blocks, double alpha_value);
KvBlocks blend_kv(const APTState& state, double alpha_value);

/// Snapshots the current conditioning as "old" (mid-transition switches thus
/// snapshot the blended state), computes the window, and restarts tau.
APTState begin_transition(const KvBlocks& current_kv, std::span<const float> new_embed,
                          std::span<const float> old_embed, const APTConfig& config);

void set_new_conditioning(APTState& state, KvBlocks blocks);

/// Conditioning in effect at the state's current tau.
KvBlocks effective_conditioning(const APTState& state, const APTConfig& config);

/// Advances tau by a number of latent frames and deactivates a finished
/// transition.
void advance_transition(APTState& state, int latent_frames, const APTConfig& config);

}  // namespace idstream
