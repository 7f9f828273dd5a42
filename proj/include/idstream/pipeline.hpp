// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "idstream/clock.hpp"
#include "idstream/memory.hpp"
#include "idstream/oracles.hpp"
#include "idstream/registry.hpp"
#include "idstream/synth.hpp"
#include "idstream/transition.hpp"
#include "idstream/verifier.hpp"

namespace idstream {

struct CacheLayout {
    int n_sink = 3;                  // permanent sink latent frames
    int n_local = 9;                 // sliding local window, latent frames
    int memory_cap = 4;              // retrieved memory frames, upper bound
    int chunk_size = 3;              // latent frames per chunk
    int pixel_frames_per_chunk = 12;

    int window_chunks() const { return n_local / chunk_size; }
    void validate() const;
};

enum class TransitionMode { apt, recache, hard };
enum class OracleMode { llm, heuristic };
enum class ClockMode { fixed, steady };

struct TimingConfig {
    ClockMode clock = ClockMode::fixed;
    double chunk_seconds = 0.5;            // charged per chunk on the fixed clock
    double verify_seconds = 0.2;           // simulated per-ticket worker latency
    std::vector<double> verify_schedule;   // optional per-chunk override, 1-based
    double worker_sleep_seconds = 0.0;     // threaded mode: injected worker delay
};

struct PromptSpan {
    std::string text;
    int chunks = 5;
};

struct EfficiencyReport {
    double e2e_seconds = 0.0;
    std::vector<double> per_chunk_seconds;
    double fps = 0.0;            // pixel_frames_per_chunk / mean chunk time
    double blocking_wait_total = 0.0;
    int recache_count = 0;
};

/// fps and aggregate fields from the collected timings.
EfficiencyReport measure(std::vector<double> per_chunk_seconds, double e2e_seconds,
                         double blocking_wait_total, int recache_count,
                         const CacheLayout& layout);

struct ArchivalSource {
    bool evicted = false;
    int source_chunk = 0;
};

/// Clean-context for the first n_local/chunk_size chunks, afterwards the
/// chunk leaving the sliding window (n minus the window span).
ArchivalSource archival_source(int chunk_index, const CacheLayout& layout);

struct ChunkTrace {
    int chunk_index = 0;
    int prompt_index = 0;
    double tau = -1.0;
    double alpha = 1.0;
    int w_apt = 0;
    std::vector<int> memory_frame_ids;   // active memory during this chunk
    bool source_evicted = false;
    int source_chunk = 0;
    int archived_frame_id = 0;
    double entity_score_raw = 0.0;
    double entity_score_norm = 0.0;
    double visual_score = 0.5;
    double fused_score = 0.0;
    bool visual_neutral = false;
    int corrections_applied = 0;
    double chunk_seconds = 0.0;
    double blocking_wait = 0.0;
    std::map<std::string, double> alignment;  // mean per-entity frame-key cosine
};

struct PromptTrace {
    int prompt_index = 0;
    std::string text;
    std::vector<int> active_ids;
    std::vector<std::string> active_names;
    std::vector<bool> is_new;
    std::vector<int> retrieved_frames;
    int w_apt = 0;
};

struct SessionResult {
    GlobalRegistry registry;
    FrameArchive archive;
    std::vector<PromptTrace> prompts;
    std::vector<ChunkTrace> chunks;
    EfficiencyReport efficiency;
};

struct OracleSet {
    Oracle* extract = nullptr;
    Oracle* match = nullptr;
    Oracle* verify = nullptr;
};

struct SessionSetup {
    std::vector<PromptSpan> schedule;
    CacheLayout layout;
    ScoringConfig scoring;
    APTConfig apt;
    TransitionMode transition_mode = TransitionMode::apt;
    OracleMode oracle_mode = OracleMode::llm;
    bool memory_enabled = true;         // identity-aware retrieval + KV injection
    bool per_chunk_retrieval = false;   // retrieve every chunk instead of per prompt
    int verify_queue_depth = 8;
    double oracle_deadline_seconds = 10.0;
    std::vector<std::string> lexicon = default_lexicon();
    TimingConfig timing;
    bool attach_images = false;         // render PNG payloads into verify requests
};

/// Runs the streaming loop: per prompt, entity extraction + ID assignment and
/// identity-aware retrieval; per chunk, generation, asynchronous verification
/// with the three-chunk eviction lag, registry correction and archival of the
/// top-scored frame.
SessionResult run_session(const SessionSetup& setup, Generator& generator,
                          const OracleSet& oracles);

}  // namespace idstream
