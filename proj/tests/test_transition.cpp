// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "idstream/transition.hpp"

using namespace idstream;

namespace {

KvBlocks const_blocks(float key_value, float value_value, int tokens = 4, int heads = 2,
                      int dim = 3) {
    KeyBlock b;
    b.layer_id = 0;
    b.keys = KeyTensor(tokens, heads, dim);
    b.values = KeyTensor(tokens, heads, dim);
    for (auto& v : b.keys.data) v = key_value;
    for (auto& v : b.values.data) v = value_value;
    return {b};
}

std::vector<float> rotated(double angle_rad, int dim = 8) {
    std::vector<float> v(dim, 0.0f);
    v[0] = static_cast<float>(std::cos(angle_rad));
    v[1] = static_cast<float>(std::sin(angle_rad));
    return v;
}

}  // namespace

TEST_CASE("window_length anchors: cos 1 / 0.5 / 0") {
    APTConfig cfg;
    auto a = rotated(0.0);
    CHECK(window_length(a, a, cfg) == 3);
    CHECK(window_length(a, rotated(std::acos(0.5)), cfg) == 9);
    CHECK(window_length(a, rotated(std::acos(0.0)), cfg) == 15);
}

TEST_CASE("window_length snaps half-up to chunk boundaries and clamps") {
    APTConfig cfg;
    // delta = 1 - cos: raw = 3 + 12*delta. cos(angle) chosen so raw sits
    // between boundaries.
    auto a = rotated(0.0);
    // raw = 4.5 -> snap half-up to 6
    CHECK(window_length(a, rotated(std::acos(1.0 - 1.5 / 12.0)), cfg) == 6);
    // raw = 4.4 -> nearest is 3
    CHECK(window_length(a, rotated(std::acos(1.0 - 1.4 / 12.0)), cfg) == 3);
    // opposite vectors: 1 - cos = 2 clipped to 1 -> 15
    auto neg = rotated(0.0);
    for (auto& v : neg) v = -v;
    CHECK(window_length(a, neg, cfg) == 15);
}

TEST_CASE("window_length rejects bad embeddings") {
    APTConfig cfg;
    std::vector<float> zero(8, 0.0f);
    auto a = rotated(0.3);
    CHECK_THROWS_AS(window_length(a, zero, cfg), std::invalid_argument);
    std::vector<float> short_vec(4, 1.0f);
    CHECK_THROWS_AS(window_length(a, short_vec, cfg), std::invalid_argument);
}

TEST_CASE("window_length output is always a chunk multiple within bounds") {
    APTConfig cfg;
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    for (int i = 0; i < 300; ++i) {
        std::vector<float> u(8), v(8);
        for (auto& x : u) x = static_cast<float>(g(rng));
        for (auto& x : v) x = static_cast<float>(g(rng));
        int w = window_length(u, v, cfg);
        CHECK(w >= cfg.w_min);
        CHECK(w <= cfg.w_max);
        CHECK(w % cfg.chunk_size == 0);
    }
}

TEST_CASE("alpha: delay phase, boundaries, midpoint") {
    APTConfig cfg;  // d_delay = 3
    CHECK(alpha(0, 9, cfg) == 0.0);
    CHECK(alpha(2, 9, cfg) == 0.0);
    CHECK(alpha(3, 9, cfg) == 0.0);  // cos(0) boundary, exactly zero
    for (int w : {3, 6, 9, 12, 15}) {
        CHECK(alpha(3 + w, w, cfg) == 1.0);
        CHECK(alpha(3.0 + w / 2.0, w, cfg) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(alpha(3 + w + 5, w, cfg) == 1.0);
    }
    CHECK_THROWS_AS(alpha(-1, 9, cfg), std::invalid_argument);
    CHECK_THROWS_AS(alpha(0, 0, cfg), std::invalid_argument);
}

TEST_CASE("alpha is nondecreasing in tau") {
    APTConfig cfg;
    for (int w : {3, 9, 15}) {
        double prev = -1.0;
        for (double tau = 0.0; tau <= 3 + w + 2; tau += 0.25) {
            double a = alpha(tau, w, cfg);
            CHECK(a >= prev);
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
            prev = a;
        }
    }
}

TEST_CASE("blend endpoints are bit-exact") {
    KvBlocks old_blocks = const_blocks(1.25f, -2.5f);
    KvBlocks new_blocks = const_blocks(0.75f, 3.125f);
    KvBlocks at0 = blend_kv(old_blocks, new_blocks, 0.0);
    KvBlocks at1 = blend_kv(old_blocks, new_blocks, 1.0);
    CHECK(at0[0].keys.data == old_blocks[0].keys.data);
    CHECK(at0[0].values.data == old_blocks[0].values.data);
    CHECK(at1[0].keys.data == new_blocks[0].keys.data);
    CHECK(at1[0].values.data == new_blocks[0].values.data);
}

TEST_CASE("blend midpoint matches a scalar elementwise loop") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    KvBlocks old_blocks = const_blocks(0, 0);
    KvBlocks new_blocks = const_blocks(0, 0);
    for (auto& v : old_blocks[0].keys.data) v = static_cast<float>(g(rng));
    for (auto& v : old_blocks[0].values.data) v = static_cast<float>(g(rng));
    for (auto& v : new_blocks[0].keys.data) v = static_cast<float>(g(rng));
    for (auto& v : new_blocks[0].values.data) v = static_cast<float>(g(rng));

    // Blended blocks are float32; the scalar oracle rounds the same way, so
    // the comparison is exact.
    const double a = 0.5;
    KvBlocks mid = blend_kv(old_blocks, new_blocks, a);
    for (std::size_t i = 0; i < mid[0].keys.data.size(); ++i) {
        float want = static_cast<float>((1 - a) * old_blocks[0].keys.data[i] +
                                        a * new_blocks[0].keys.data[i]);
        CHECK(mid[0].keys.data[i] == want);
    }

    // Linearity: mean of blend(a) and blend(1-a) equals blend(0.5).
    for (double aa : {0.2, 0.35, 0.7}) {
        KvBlocks lo = blend_kv(old_blocks, new_blocks, aa);
        KvBlocks hi = blend_kv(old_blocks, new_blocks, 1.0 - aa);
        for (std::size_t i = 0; i < lo[0].keys.data.size(); ++i) {
            double avg = 0.5 * (static_cast<double>(lo[0].keys.data[i]) + hi[0].keys.data[i]);
            CHECK(avg == doctest::Approx(mid[0].keys.data[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("blend rejects mismatched shapes") {
    KvBlocks a = const_blocks(1, 1, 4);
    KvBlocks b = const_blocks(1, 1, 6);
    CHECK_THROWS_AS(blend_kv(a, b, 0.5), std::invalid_argument);
}

TEST_CASE("begin_transition snapshots and sizes the window") {
    APTConfig cfg;
    KvBlocks current = const_blocks(2.0f, 2.0f);
    auto e = rotated(0.0);

    APTState same = begin_transition(current, e, e, cfg);
    CHECK(same.w_apt == 3);
    CHECK(same.tau == 0.0);
    CHECK(same.active);
    CHECK_FALSE(same.new_ready);
    CHECK(same.old_blocks[0].keys.data == current[0].keys.data);

    APTState far = begin_transition(current, rotated(std::acos(0.0)), e, cfg);
    CHECK(far.w_apt == 15);
}

TEST_CASE("a mid-transition switch snapshots the blended state") {
    APTConfig cfg;
    KvBlocks original = const_blocks(0.0f, 0.0f);
    KvBlocks target = const_blocks(1.0f, 1.0f);
    auto e = rotated(0.0);

    APTState first = begin_transition(original, rotated(std::acos(0.5)), e, cfg);
    set_new_conditioning(first, target);
    CHECK(first.w_apt == 9);

    // Advance into the blending phase: tau = 6 -> alpha = (1-cos(pi/3))/2 = 0.25.
    advance_transition(first, 6, cfg);
    double a = alpha(first.tau, first.w_apt, cfg);
    CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
    KvBlocks blended = effective_conditioning(first, cfg);
    CHECK(blended[0].keys.data[0] == doctest::Approx(0.25).epsilon(1e-6));

    // Second switch mid-flight: the snapshot is the blended state, not the
    // original conditioning.
    APTState second = begin_transition(blended, rotated(1.0), rotated(std::acos(0.5)), cfg);
    CHECK(second.old_blocks[0].keys.data[0] == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(second.tau == 0.0);
}

TEST_CASE("transition deactivates after the window completes") {
    APTConfig cfg;
    KvBlocks current = const_blocks(0.0f, 0.0f);
    APTState st = begin_transition(current, rotated(0.0), rotated(0.0), cfg);
    set_new_conditioning(st, const_blocks(1.0f, 1.0f));
    CHECK(st.active);
    advance_transition(st, 3, cfg);  // tau = 3 (= d_delay, alpha still 0)
    CHECK(st.active);
    advance_transition(st, 3, cfg);  // tau = 6 = d_delay + w_apt
    CHECK(st.active);
    advance_transition(st, 3, cfg);  // tau = 9 > d_delay + w_apt
    CHECK_FALSE(st.active);
    KvBlocks after = effective_conditioning(st, cfg);
    CHECK(after[0].keys.data[0] == 1.0f);  // fully on the new blocks
}
