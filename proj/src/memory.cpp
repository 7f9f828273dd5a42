// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace idstream {

namespace {

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

const ArchivedFrame& FrameArchive::add(ArchivedFrame frame) {
    frame.frame_id = static_cast<int>(frames_.size()) + 1;
    frame.temporal_order = static_cast<int>(frames_.size()) + 1;
    frames_.push_back(std::move(frame));
    return frames_.back();
}

const ArchivedFrame& FrameArchive::restore(ArchivedFrame frame) {
    frames_.push_back(std::move(frame));
    return frames_.back();
}

TokenWeightVector build_token_weights(const std::string& prompt_text,
                                      const std::vector<std::string>& entity_names,
                                      const std::vector<std::string>& attributes,
                                      int token_count) {
    if (token_count < 1) throw std::invalid_argument("build_token_weights: token_count < 1");
    const int S = token_count;
    TokenWeightVector w;
    w.raw.assign(S, 1.0);

    if (!entity_names.empty()) {
        const std::string lower = to_lower(prompt_text);
        const double len = static_cast<double>(std::max<std::size_t>(lower.size(), 1));
        const int expand = static_cast<int>(std::floor(0.02 * S));
        std::vector<bool> matched(S, false);
        bool any_match = false;

        auto mark_span = [&](const std::string& needle) {
            if (needle.empty()) return;
            std::size_t pos = lower.find(to_lower(needle));
            if (pos == std::string::npos) return;
            // Character-span ratio to token indices: floor for start, ceil
            // for end (exclusive), then expand both sides.
            int start = static_cast<int>(std::floor(static_cast<double>(pos) / len * S));
            int end = static_cast<int>(
                std::ceil(static_cast<double>(pos + needle.size()) / len * S));
            start = std::max(0, start - expand);
            end = std::min(S, end + expand);
            for (int t = start; t < end; ++t) matched[t] = true;
            any_match = true;
        };
        for (const auto& name : entity_names) mark_span(name);
        for (const auto& attr : attributes) mark_span(attr);

        if (any_match) {
            const int head = static_cast<int>(std::floor(0.08 * S));
            const int tail_start = S - head;
            for (int t = 0; t < S; ++t) {
                if (matched[t]) {
                    w.raw[t] = 2.5;
                } else if (t < head) {
                    w.raw[t] = 0.7;
                } else if (t >= tail_start) {
                    w.raw[t] = 0.5;
                }
            }
        } else {
            const int mid_start = static_cast<int>(std::floor(0.10 * S));
            const int mid_end = static_cast<int>(std::floor(0.85 * S));
            for (int t = mid_start; t < mid_end; ++t) w.raw[t] = 1.5;
        }
    }

    double sum = 0.0;
    for (double v : w.raw) sum += v;
    w.normalized.resize(S);
    for (int t = 0; t < S; ++t) w.normalized[t] = w.raw[t] / (sum + 1e-8);
    return w;
}

double entity_score_layer(const KeyBlock& text_keys, const KeyBlock& frame_keys,
                          const TokenWeightVector& weights) {
    if (text_keys.heads() != frame_keys.heads() ||
        text_keys.head_dim() != frame_keys.head_dim()) {
        throw std::invalid_argument("entity_score: head layout mismatch");
    }
    if (static_cast<int>(weights.normalized.size()) != text_keys.tokens()) {
        throw std::invalid_argument("entity_score: weight length != text token count");
    }
    const int H = text_keys.heads();
    const int d = text_keys.head_dim();
    const int S = text_keys.tokens();
    const int n_f = frame_keys.tokens();
    if (n_f < 1) throw std::invalid_argument("entity_score: empty frame keys");

    double acc = 0.0;
    for (int h = 0; h < H; ++h) {
        double dot = 0.0;
        for (int k = 0; k < d; ++k) {
            double r = 0.0;
            for (int u = 0; u < S; ++u) r += weights.normalized[u] * text_keys.keys.at(u, h, k);
            double kv = 0.0;
            for (int v = 0; v < n_f; ++v) kv += frame_keys.keys.at(v, h, k);
            dot += r * (kv / n_f);
        }
        acc += dot / std::sqrt(static_cast<double>(d));
    }
    return acc / H;
}

double entity_score(const KvBlocks& text_kv, const KvBlocks& frame_kv,
                    const TokenWeightVector& weights, const ScoringConfig& config) {
    auto find_layer = [](const KvBlocks& blocks, int layer_id) -> const KeyBlock* {
        for (const auto& b : blocks) {
            if (b.layer_id == layer_id) return &b;
        }
        return nullptr;
    };
    double total = 0.0;
    for (const auto& lw : config.layers) {
        const KeyBlock* text = find_layer(text_kv, lw.layer_id);
        const KeyBlock* frame = find_layer(frame_kv, lw.layer_id);
        if (!text || !frame) {
            throw std::invalid_argument("entity_score: configured layer missing from KV");
        }
        total += lw.beta * entity_score_layer(*text, *frame, weights);
    }
    return total;
}

double entity_score(const KeyBlock& text_keys, const KeyBlock& frame_keys,
                    const TokenWeightVector& weights, const ScoringConfig& config) {
    return entity_score(KvBlocks{text_keys}, KvBlocks{frame_keys}, weights, config);
}

std::vector<double> normalize_entity_scores(const std::vector<double>& scores) {
    if (scores.empty()) throw std::invalid_argument("normalize_entity_scores: empty input");
    auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    if (*mx == *mn) {
        std::fill(out.begin(), out.end(), 0.5);
        return out;
    }
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *mn) / (*mx - *mn);
    return out;
}

double fuse_score(double entity_norm, double visual, double lambda) {
    return (1.0 - lambda) * entity_norm + lambda * visual;
}

std::size_t select_archive_frame(const std::vector<double>& fused_scores) {
    if (fused_scores.empty()) throw std::invalid_argument("select_archive_frame: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < fused_scores.size(); ++i) {
        if (fused_scores[i] > fused_scores[best]) best = i;
    }
    return best;
}

ActiveMemory greedy_retrieve(const FrameArchive& archive, const std::set<int>& active_ids,
                             int cap) {
    if (cap < 1) throw std::invalid_argument("greedy_retrieve: cap < 1");
    ActiveMemory memory;
    if (archive.empty()) return memory;

    const auto& frames = archive.frames();
    std::vector<bool> selected(frames.size(), false);
    std::set<int> uncovered = active_ids;

    auto newly_covered = [&](const ArchivedFrame& f) {
        int n = 0;
        for (int id : f.entity_ids) {
            if (uncovered.count(id)) ++n;
        }
        return n;
    };

    // Phase 1: greedy cover. Ties by entity score, then later temporal order.
    std::vector<std::size_t> picks;
    while (!uncovered.empty() && static_cast<int>(picks.size()) < cap) {
        int best_gain = 0;
        std::size_t best = frames.size();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (selected[i]) continue;
            int gain = newly_covered(frames[i]);
            if (gain == 0) continue;
            if (best == frames.size() || gain > best_gain ||
                (gain == best_gain &&
                 (frames[i].entity_score_norm > frames[best].entity_score_norm ||
                  (frames[i].entity_score_norm == frames[best].entity_score_norm &&
                   frames[i].temporal_order > frames[best].temporal_order)))) {
                best = i;
                best_gain = gain;
            }
        }
        if (best == frames.size()) break;  // nothing covers any remaining id
        selected[best] = true;
        picks.push_back(best);
        for (int id : frames[best].entity_ids) uncovered.erase(id);
    }

    // Dynamic budget: the cover size, raised to two when several entities are
    // active and candidates exist, capped by the configured maximum.
    int budget = static_cast<int>(picks.size());
    if (active_ids.size() >= 2 && frames.size() >= 2) budget = std::max(budget, 2);
    budget = std::min(budget, cap);

    // Phase 2: fill remaining slots with the highest fused scores.
    while (static_cast<int>(picks.size()) < budget) {
        std::size_t best = frames.size();
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (selected[i]) continue;
            if (best == frames.size() || frames[i].fused_score > frames[best].fused_score) {
                best = i;
            }
        }
        if (best == frames.size()) break;
        selected[best] = true;
        picks.push_back(best);
    }

    std::sort(picks.begin(), picks.end(), [&](std::size_t a, std::size_t b) {
        return frames[a].temporal_order < frames[b].temporal_order;
    });
    std::vector<const ArchivedFrame*> chosen;
    for (std::size_t i : picks) {
        memory.frame_ids.push_back(frames[i].frame_id);
        chosen.push_back(&frames[i]);
    }
    memory.assembled_kv = assemble_memory_kv(std::move(chosen));
    return memory;
}

KvBlocks assemble_memory_kv(std::vector<const ArchivedFrame*> selected) {
    KvBlocks out;
    if (selected.empty()) return out;
    std::sort(selected.begin(), selected.end(), [](const ArchivedFrame* a, const ArchivedFrame* b) {
        return a->temporal_order < b->temporal_order;
    });

    // Frames may differ in token count, but layer ids and head layout must
    // agree block-by-block.
    const KvBlocks& first = selected.front()->kv;
    for (const ArchivedFrame* f : selected) {
        bool compatible = f->kv.size() == first.size();
        for (std::size_t l = 0; compatible && l < first.size(); ++l) {
            compatible = f->kv[l].layer_id == first[l].layer_id &&
                         f->kv[l].heads() == first[l].heads() &&
                         f->kv[l].head_dim() == first[l].head_dim();
        }
        if (!compatible) {
            throw std::invalid_argument("assemble_memory_kv: heterogeneous layer structure");
        }
    }

    for (std::size_t l = 0; l < first.size(); ++l) {
        int total_tokens = 0;
        for (const ArchivedFrame* f : selected) total_tokens += f->kv[l].tokens();
        KeyBlock block;
        block.layer_id = first[l].layer_id;
        block.keys = KeyTensor(total_tokens, first[l].heads(), first[l].head_dim());
        block.values = KeyTensor(total_tokens, first[l].heads(), first[l].head_dim());
        std::size_t offset = 0;
        for (const ArchivedFrame* f : selected) {
            const KeyBlock& src = f->kv[l];
            std::copy(src.keys.data.begin(), src.keys.data.end(),
                      block.keys.data.begin() + offset);
            std::copy(src.values.data.begin(), src.values.data.end(),
                      block.values.data.begin() + offset);
            offset += src.keys.data.size();
        }
        out.push_back(std::move(block));
    }
    return out;
}

}  // namespace idstream
