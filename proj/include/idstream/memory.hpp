// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "idstream/kv.hpp"

namespace idstream {

/// Per-token prompt weights: raw values and their normalized form
/// raw_u / (sum(raw) + epsilon).
struct TokenWeightVector {
    std::vector<double> raw;
    std::vector<double> normalized;
};

struct LayerWeight {
    int layer_id = 0;
    double beta = 1.0;
};

struct ScoringConfig {
    double lambda = 0.3;                     // fusion weight for the visual score
    std::vector<LayerWeight> layers{{0, 1.0}};
    double epsilon_norm = 1e-8;
};

struct ArchivedFrame {
    int frame_id = 0;
    int prompt_index = 0;
    int chunk_index = 0;
    int frame_in_chunk = 0;
    std::set<int> entity_ids;
    double entity_score_raw = 0.0;
    double entity_score_norm = 0.0;   // min-max normalized within the chunk
    double visual_score = 0.5;
    double fused_score = 0.0;         // (1-lambda)*entity_norm + lambda*visual
    KvBlocks kv;
    int temporal_order = 0;           // strictly increasing with archival order
    bool source_evicted = false;
};

/// Append-only store of one representative frame per generated chunk.
class FrameArchive {
public:
    const std::vector<ArchivedFrame>& frames() const { return frames_; }
    std::size_t size() const { return frames_.size(); }
    bool empty() const { return frames_.empty(); }

    /// Assigns frame_id and temporal_order, then appends.
    const ArchivedFrame& add(ArchivedFrame frame);

    /// Appends a frame keeping its recorded id and order (archive import).
    const ArchivedFrame& restore(ArchivedFrame frame);

private:
    std::vector<ArchivedFrame> frames_;
};

struct ActiveMemory {
    std::vector<int> frame_ids;   // ordered by temporal_order
    KvBlocks assembled_kv;
};

/// Builds the entity-token weight vector for a prompt. Matched entity and
/// attribute spans (expanded by floor(0.02*S) tokens on both sides) weigh
/// 2.5; unmatched tokens in the first 8% weigh 0.7 and in the last 8% weigh
/// 0.5; with entities but no matched span, tokens in [10%, 85%) weigh 1.5;
/// with no entities everything stays at 1.0.
TokenWeightVector build_token_weights(const std::string& prompt_text,
                                      const std::vector<std::string>& entity_names,
                                      const std::vector<std::string>& attributes,
                                      int token_count);

/// Single-layer saliency: (1/H) * sum_h <r_h, k_h> / sqrt(d), where r_h is
/// the weight-averaged text key and k_h the mean visual key.
double entity_score_layer(const KeyBlock& text_keys, const KeyBlock& frame_keys,
                          const TokenWeightVector& weights);

/// Layer-weighted sum of entity_score_layer over the configured layers.
double entity_score(const KvBlocks& text_kv, const KvBlocks& frame_kv,
                    const TokenWeightVector& weights, const ScoringConfig& config);
double entity_score(const KeyBlock& text_keys, const KeyBlock& frame_keys,
                    const TokenWeightVector& weights, const ScoringConfig& config);

/// Min-max within the chunk; a degenerate (all-equal) chunk maps to 0.5.
std::vector<double> normalize_entity_scores(const std::vector<double>& scores);

double fuse_score(double entity_norm, double visual, double lambda);

/// Index of the maximal fused score; ties go to the earliest candidate.
std::size_t select_archive_frame(const std::vector<double>& fused_scores);

/// Greedy maximum-coverage retrieval over the archive, with the dynamic
/// budget rule: cover the active IDs greedily (ties by entity score, then by
/// later temporal order), keep at least two frames when several entities are
/// active and the archive has candidates, and fill any remaining budget with
/// the highest fused scores. Result is sorted by temporal order.
ActiveMemory greedy_retrieve(const FrameArchive& archive, const std::set<int>& active_ids,
                             int cap);

/// Per-layer concatenation of the selected frames' blocks along the token
/// axis, in temporal order. Heterogeneous layer structure is a hard error.
KvBlocks assemble_memory_kv(std::vector<const ArchivedFrame*> selected);

// ---- archive export (JSON metadata + optional float32 sidecar) ----

nlohmann::json archive_to_json(const FrameArchive& archive, const std::string& sidecar_name);

/// Writes metadata JSON and, when with_kv is set, a binary sidecar
/// "<stem>.kv.bin" next to it (little-endian float32, row-major, with a
/// per-block layer/token/head/dim header).
void write_archive(const FrameArchive& archive, const std::filesystem::path& json_path,
                   bool with_kv);

/// Loads an archive export; the sidecar is optional (frames then carry no KV).
FrameArchive read_archive(const std::filesystem::path& json_path);

}  // namespace idstream
