// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace idstream {

/// Dense (tokens, heads, head_dim) float32 array, row-major.
struct KeyTensor {
    int tokens = 0;
    int heads = 0;
    int head_dim = 0;
    std::vector<float> data;

    KeyTensor() = default;
    KeyTensor(int tokens_, int heads_, int head_dim_)
        : tokens(tokens_), heads(heads_), head_dim(head_dim_),
          data(static_cast<std::size_t>(tokens_) * static_cast<std::size_t>(heads_) *
                   static_cast<std::size_t>(head_dim_),
               0.0f) {}

    std::size_t index(int t, int h, int d) const {
        return (static_cast<std::size_t>(t) * heads + h) * head_dim + d;
    }
    float at(int t, int h, int d) const { return data[index(t, h, d)]; }
    float& at(int t, int h, int d) { return data[index(t, h, d)]; }

    bool same_shape(const KeyTensor& o) const {
        return tokens == o.tokens && heads == o.heads && head_dim == o.head_dim;
    }
    bool finite() const {
        for (float v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

/// One layer's cached keys and values. The two tensors are shape-identical.
struct KeyBlock {
    int layer_id = 0;
    KeyTensor keys;
    KeyTensor values;

    int tokens() const { return keys.tokens; }
    int heads() const { return keys.heads; }
    int head_dim() const { return keys.head_dim; }

    void validate() const {
        if (!keys.same_shape(values)) {
            throw std::invalid_argument("KeyBlock: keys/values shape mismatch");
        }
        if (keys.data.size() != static_cast<std::size_t>(keys.tokens) * keys.heads * keys.head_dim ||
            values.data.size() != keys.data.size()) {
            throw std::invalid_argument("KeyBlock: data size does not match declared shape");
        }
        if (!keys.finite() || !values.finite()) {
            throw std::invalid_argument("KeyBlock: non-finite entry");
        }
    }
};

using KvBlocks = std::vector<KeyBlock>;

/// First `count` token rows of a block (text conditioning is padded to a
/// fixed capacity; scoring uses the real token span).
inline KeyBlock slice_tokens(const KeyBlock& block, int count) {
    if (count >= block.tokens()) return block;
    KeyBlock out;
    out.layer_id = block.layer_id;
    out.keys = KeyTensor(count, block.heads(), block.head_dim());
    out.values = KeyTensor(count, block.heads(), block.head_dim());
    const std::size_t n = out.keys.data.size();
    std::copy(block.keys.data.begin(), block.keys.data.begin() + n, out.keys.data.begin());
    std::copy(block.values.data.begin(), block.values.data.begin() + n, out.values.data.begin());
    return out;
}

inline bool same_layout(const KvBlocks& a, const KvBlocks& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].layer_id != b[i].layer_id || !a[i].keys.same_shape(b[i].keys)) return false;
    }
    return true;
}

}  // namespace idstream
