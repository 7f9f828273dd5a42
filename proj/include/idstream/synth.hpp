// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "idstream/kv.hpp"

namespace idstream {

struct WorldConfig {
    std::uint64_t seed = 0;
    int heads = 4;
    int head_dim = 16;
    int visual_tokens = 8;   // per frame
    int embed_dim = 64;
    int text_capacity = 64;  // conditioning blocks are padded to this length
    int layer_id = 0;
    int chunk_size = 3;      // latent frames per chunk
    int latent_dim = 16;     // stand-in pixel payload per frame
    double noise_sigma = 0.0;
    double drift_rate = 0.0; // per-chunk identity attenuation
};

struct TextEncoding {
    KvBlocks blocks;             // cross-attention conditioning (keys + values)
    std::vector<float> pooled;   // mean-pooled prompt embedding, unit norm
    int token_count = 0;
};

struct SynthFrame {
    KeyBlock visual;                       // visual keys/values for scoring + archival
    std::vector<float> latent;             // deterministic payload standing in for pixels
    std::vector<std::string> present;      // declared entity presence
    std::map<std::string, double> alignment;  // cosine of mean frame key vs entity vector
};

struct SyntheticChunk {
    int chunk_index = 0;
    std::vector<SynthFrame> frames;
};

/// Generator surface the pipeline drives. The synthetic world implements it;
/// tests may substitute failing or instrumented variants.
class Generator {
public:
    virtual ~Generator() = default;
    virtual TextEncoding text_keys(const std::string& prompt_text,
                                   const std::vector<std::string>& entity_names) = 0;
    virtual SyntheticChunk gen_chunk(int chunk_index,
                                     const std::vector<std::string>& present_entities) = 0;
    /// Memory injection containing these entities resets their attenuation.
    virtual void inject_memory(const std::vector<std::string>& entity_names,
                               int chunk_index) = 0;
    /// Re-encodes the historical context under the active condition
    /// (full-recache transition mode); only the count matters here.
    virtual void recache_context(int latent_frames) = 0;
    virtual int recache_count() const = 0;
};

/// Deterministic stand-in for the DiT/VAE/text encoder. Entity identity is a
/// fixed unit vector per canonical name; frame keys carry those vectors
/// attenuated by (1 - drift)^(chunks since the entity's last memory refresh)
/// plus seeded noise, so retrieval has a measurable, monotone effect.
class SyntheticWorld : public Generator {
public:
    explicit SyntheticWorld(WorldConfig config);

    const WorldConfig& config() const { return cfg_; }

    /// Unit identity vector of dimension heads*head_dim, created on first use.
    const std::vector<float>& entity_vector(const std::string& name);

    TextEncoding text_keys(const std::string& prompt_text,
                           const std::vector<std::string>& entity_names) override;
    SyntheticChunk gen_chunk(int chunk_index,
                             const std::vector<std::string>& present_entities) override;
    void inject_memory(const std::vector<std::string>& entity_names, int chunk_index) override;
    void recache_context(int latent_frames) override;
    int recache_count() const override { return recaches_; }

    /// (1 - drift)^(chunk_index - last refresh); 1.0 for unseen entities.
    double attenuation(const std::string& name, int chunk_index) const;

private:
    WorldConfig cfg_;
    std::map<std::string, std::vector<float>> vectors_;
    std::map<std::string, int> last_refresh_;
    int recaches_ = 0;
};

/// Cosine between the mean-pooled (over tokens) flattened frame keys and an
/// entity vector; 0 when either side is zero.
double key_alignment(const KeyBlock& frame_keys, std::span<const float> entity_vec);

/// Split a prompt into whitespace-delimited tokens (the synthetic tokenizer).
int synth_token_count(const std::string& prompt_text);

}  // namespace idstream
