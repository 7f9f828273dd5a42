// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent scalar-loop oracles used to freeze expected values. These
// deliberately avoid the library's implementation paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "idstream/kv.hpp"
#include "idstream/ndarray.hpp"

namespace testoracle {

/// Elementwise triple-loop evaluation of the layer saliency formula.
inline double entity_score_scalar(const idstream::KeyBlock& text,
                                  const idstream::KeyBlock& frame,
                                  const std::vector<double>& normalized_weights) {
    const int H = text.heads();
    const int d = text.head_dim();
    double per_head_sum = 0.0;
    for (int h = 0; h < H; ++h) {
        std::vector<double> r(d, 0.0);
        for (int u = 0; u < text.tokens(); ++u) {
            for (int k = 0; k < d; ++k) r[k] += normalized_weights[u] * text.keys.at(u, h, k);
        }
        std::vector<double> kbar(d, 0.0);
        for (int v = 0; v < frame.tokens(); ++v) {
            for (int k = 0; k < d; ++k) kbar[k] += frame.keys.at(v, h, k);
        }
        double dot = 0.0;
        for (int k = 0; k < d; ++k) dot += r[k] * (kbar[k] / frame.tokens());
        per_head_sum += dot / std::sqrt(static_cast<double>(d));
    }
    return per_head_sum / H;
}

/// Sort-then-interpolate percentile (linear between closest ranks).
inline double percentile_scalar(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double pos = (static_cast<double>(v.size()) - 1.0) * p / 100.0;
    std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

/// Four-neighbor bilinear sample with clamped reads.
inline double bilinear_scalar(const idstream::NdArray& img, double x, double y) {
    const long W = static_cast<long>(img.dims[1]);
    const long H = static_cast<long>(img.dims[0]);
    auto cl = [](long v, long n) { return std::min(std::max(v, 0L), n - 1); };
    long x0 = static_cast<long>(std::floor(x));
    long y0 = static_cast<long>(std::floor(y));
    double dx = x - std::floor(x);
    double dy = y - std::floor(y);
    double v00 = img.at2(cl(y0, H), cl(x0, W));
    double v01 = img.at2(cl(y0, H), cl(x0 + 1, W));
    double v10 = img.at2(cl(y0 + 1, H), cl(x0, W));
    double v11 = img.at2(cl(y0 + 1, H), cl(x0 + 1, W));
    return (1 - dy) * ((1 - dx) * v00 + dx * v01) + dy * ((1 - dx) * v10 + dx * v11);
}

/// Minimum number of frames (by entity-set mask) needed to cover `target`;
/// returns -1 when infeasible. BFS over coverage states.
inline int min_cover_scalar(const std::vector<std::uint32_t>& masks, std::uint32_t target) {
    if (target == 0) return 0;
    std::vector<int> dist(1u << 4, -1);  // up to 4 ids
    std::vector<std::uint32_t> queue = {0};
    dist[0] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        std::uint32_t cover = queue[qi];
        if ((cover & target) == target) return dist[cover];
        for (std::uint32_t m : masks) {
            std::uint32_t next = (cover | m) & target;
            if (dist[next] < 0) {
                dist[next] = dist[cover] + 1;
                queue.push_back(next);
            }
        }
    }
    return -1;
}

inline double agg_seg_scalar(const std::vector<double>& x, const std::vector<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    return s;
}

inline double agg_tr_scalar(const std::vector<double>& x, const std::vector<int>& omega,
                            const std::vector<double>& w) {
    double num = 0.0, den = 0.0;
    for (int i : omega) {
        num += (w[i] + w[i + 1]) * x[i];
        den += w[i] + w[i + 1];
    }
    return num / den;
}

inline double cosine_scalar(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace testoracle
