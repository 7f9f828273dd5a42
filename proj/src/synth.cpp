// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "idstream/rng.hpp"

namespace idstream {

namespace {

std::string to_lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

void normalize(std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) n += static_cast<double>(x) * x;
    n = std::sqrt(n);
    if (n == 0.0) return;
    for (float& x : v) x = static_cast<float>(x / n);
}

std::vector<float> seeded_unit_vector(std::uint64_t seed, int dim) {
    SplitMix64 rng(seed);
    std::vector<float> v(dim);
    for (float& x : v) x = static_cast<float>(rng.gaussian());
    normalize(v);
    return v;
}

}  // namespace

int synth_token_count(const std::string& prompt_text) {
    int count = 0;
    bool in_word = false;
    for (char c : prompt_text) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++count;
        in_word = !space;
    }
    return std::max(count, 1);
}

SyntheticWorld::SyntheticWorld(WorldConfig config) : cfg_(config) {}

const std::vector<float>& SyntheticWorld::entity_vector(const std::string& name) {
    auto it = vectors_.find(name);
    if (it != vectors_.end()) return it->second;
    std::uint64_t seed = mix_seed(cfg_.seed, fnv1a("entity:" + to_lower(name)));
    auto [ins, _] = vectors_.emplace(name, seeded_unit_vector(seed, cfg_.heads * cfg_.head_dim));
    return ins->second;
}

TextEncoding SyntheticWorld::text_keys(const std::string& prompt_text,
                                       const std::vector<std::string>& entity_names) {
    TextEncoding enc;
    const int S = std::min(synth_token_count(prompt_text), cfg_.text_capacity);
    enc.token_count = S;

    // Token span per entity via the character-span ratio rule.
    const std::string lower = to_lower(prompt_text);
    const double len = static_cast<double>(std::max<std::size_t>(lower.size(), 1));
    std::vector<const std::vector<float>*> signal(S, nullptr);
    for (const auto& name : entity_names) {
        std::size_t pos = lower.find(to_lower(name));
        if (pos == std::string::npos) continue;
        int start = static_cast<int>(std::floor(static_cast<double>(pos) / len * S));
        int end = static_cast<int>(std::ceil(static_cast<double>(pos + name.size()) / len * S));
        const std::vector<float>& vec = entity_vector(name);
        for (int t = std::max(0, start); t < std::min(S, end); ++t) signal[t] = &vec;
    }

    // Conditioning is padded to a fixed capacity so conditioning blocks of
    // different prompts stay shape-compatible for blending.
    SplitMix64 rng(mix_seed(cfg_.seed, fnv1a("text:" + prompt_text)));
    KeyBlock block;
    block.layer_id = cfg_.layer_id;
    block.keys = KeyTensor(cfg_.text_capacity, cfg_.heads, cfg_.head_dim);
    block.values = KeyTensor(cfg_.text_capacity, cfg_.heads, cfg_.head_dim);
    const int hd = cfg_.heads * cfg_.head_dim;
    for (int t = 0; t < S; ++t) {
        for (int i = 0; i < hd; ++i) {
            double noise = cfg_.noise_sigma * rng.gaussian();
            double base = signal[t] ? (*signal[t])[i] : 0.0;
            block.keys.data[static_cast<std::size_t>(t) * hd + i] =
                static_cast<float>(base + noise);
        }
        for (int i = 0; i < hd; ++i) {
            double noise = cfg_.noise_sigma * rng.gaussian();
            double base = signal[t] ? (*signal[t])[i] : 0.0;
            block.values.data[static_cast<std::size_t>(t) * hd + i] =
                static_cast<float>(base + noise);
        }
    }
    enc.blocks.push_back(std::move(block));

    enc.pooled = seeded_unit_vector(mix_seed(cfg_.seed, fnv1a("embed:" + prompt_text)),
                                    cfg_.embed_dim);
    return enc;
}

double SyntheticWorld::attenuation(const std::string& name, int chunk_index) const {
    auto it = last_refresh_.find(name);
    if (it == last_refresh_.end()) return 1.0;
    int elapsed = std::max(0, chunk_index - it->second);
    return std::pow(1.0 - cfg_.drift_rate, elapsed);
}

SyntheticChunk SyntheticWorld::gen_chunk(int chunk_index,
                                         const std::vector<std::string>& present_entities) {
    SyntheticChunk chunk;
    chunk.chunk_index = chunk_index;

    // First sighting counts as a refresh: identities start fresh.
    for (const auto& name : present_entities) {
        last_refresh_.emplace(name, chunk_index);
    }

    SplitMix64 rng(mix_seed(cfg_.seed, mix_seed(fnv1a("chunk"), chunk_index)));
    const int hd = cfg_.heads * cfg_.head_dim;

    std::vector<float> sig(hd, 0.0f);
    for (const auto& name : present_entities) {
        const std::vector<float>& vec = entity_vector(name);
        double att = attenuation(name, chunk_index);
        for (int i = 0; i < hd; ++i) sig[i] += static_cast<float>(att * vec[i]);
    }

    for (int f = 0; f < cfg_.chunk_size; ++f) {
        SynthFrame frame;
        frame.present = present_entities;
        frame.visual.layer_id = cfg_.layer_id;
        frame.visual.keys = KeyTensor(cfg_.visual_tokens, cfg_.heads, cfg_.head_dim);
        frame.visual.values = KeyTensor(cfg_.visual_tokens, cfg_.heads, cfg_.head_dim);
        for (int t = 0; t < cfg_.visual_tokens; ++t) {
            for (int i = 0; i < hd; ++i) {
                frame.visual.keys.data[static_cast<std::size_t>(t) * hd + i] =
                    sig[i] + static_cast<float>(cfg_.noise_sigma * rng.gaussian());
            }
            for (int i = 0; i < hd; ++i) {
                frame.visual.values.data[static_cast<std::size_t>(t) * hd + i] =
                    sig[i] + static_cast<float>(cfg_.noise_sigma * rng.gaussian());
            }
        }
        frame.latent.resize(cfg_.latent_dim);
        for (float& x : frame.latent) x = static_cast<float>(rng.gaussian());
        for (const auto& name : present_entities) {
            frame.alignment[name] = key_alignment(frame.visual, entity_vector(name));
        }
        chunk.frames.push_back(std::move(frame));
    }
    return chunk;
}

void SyntheticWorld::inject_memory(const std::vector<std::string>& entity_names,
                                   int chunk_index) {
    for (const auto& name : entity_names) last_refresh_[name] = chunk_index;
}

void SyntheticWorld::recache_context(int) { ++recaches_; }

double key_alignment(const KeyBlock& frame_keys, std::span<const float> entity_vec) {
    const int hd = frame_keys.heads() * frame_keys.head_dim();
    if (static_cast<int>(entity_vec.size()) != hd || frame_keys.tokens() == 0) return 0.0;
    std::vector<double> mean(hd, 0.0);
    for (int t = 0; t < frame_keys.tokens(); ++t) {
        for (int i = 0; i < hd; ++i) {
            mean[i] += frame_keys.keys.data[static_cast<std::size_t>(t) * hd + i];
        }
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < hd; ++i) {
        mean[i] /= frame_keys.tokens();
        dot += mean[i] * entity_vec[i];
        na += mean[i] * mean[i];
        nb += static_cast<double>(entity_vec[i]) * entity_vec[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace idstream
