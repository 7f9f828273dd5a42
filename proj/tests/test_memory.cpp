// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "idstream/memory.hpp"
#include "oracle_helpers.hpp"

using namespace idstream;

namespace {

KeyBlock random_block(std::mt19937_64& rng, int tokens, int heads, int dim, int layer = 0) {
    std::normal_distribution<double> g(0.0, 1.0);
    KeyBlock b;
    b.layer_id = layer;
    b.keys = KeyTensor(tokens, heads, dim);
    b.values = KeyTensor(tokens, heads, dim);
    for (auto& v : b.keys.data) v = static_cast<float>(g(rng));
    for (auto& v : b.values.data) v = static_cast<float>(g(rng));
    return b;
}

ArchivedFrame frame_with(std::set<int> ids, double entity_norm, double fused, int tokens = 2) {
    ArchivedFrame f;
    f.entity_ids = std::move(ids);
    f.entity_score_norm = entity_norm;
    f.fused_score = fused;
    KeyBlock b;
    b.layer_id = 0;
    b.keys = KeyTensor(tokens, 1, 2);
    b.values = KeyTensor(tokens, 1, 2);
    f.kv.push_back(std::move(b));
    return f;
}

}  // namespace

TEST_CASE("token weights: no entities means uniform") {
    auto w = build_token_weights("ten words here do not matter at all for this", {}, {}, 10);
    for (double r : w.raw) CHECK(r == 1.0);
    for (double n : w.normalized) CHECK(n == doctest::Approx(0.1).epsilon(1e-8));
    double sum = 0.0;
    for (double n : w.normalized) sum += n;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("token weights: matched span arithmetic, frozen by hand") {
    // 100-char prompt; the entity occupies characters [40, 50) so the span
    // maps to tokens [40, 50), expanded by floor(0.02*100)=2 to [38, 52).
    std::string prompt(100, 'x');
    const std::string entity = "entityname";
    prompt.replace(40, entity.size(), entity);
    auto w = build_token_weights(prompt, {entity}, {}, 100);

    for (int t = 0; t < 100; ++t) {
        double expect;
        if (t >= 38 && t <= 51) expect = 2.5;
        else if (t < 8) expect = 0.7;
        else if (t >= 92) expect = 0.5;
        else expect = 1.0;
        CHECK_MESSAGE(w.raw[t] == expect, "token ", t);
    }
    // Hand-computed: 8*0.7 + 30*1.0 + 14*2.5 + 40*1.0 + 8*0.5 = 114.6
    double sum = 0.0;
    for (double r : w.raw) sum += r;
    CHECK(sum == doctest::Approx(114.6).epsilon(1e-12));
    CHECK(w.normalized[40] == doctest::Approx(2.5 / (114.6 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("token weights: entities present but unmatched span") {
    auto w = build_token_weights(std::string(100, 'x'), {"nobody"}, {"nothing"}, 100);
    for (int t = 0; t < 100; ++t) {
        double expect = (t >= 10 && t <= 84) ? 1.5 : 1.0;
        CHECK(w.raw[t] == expect);
    }
}

TEST_CASE("token weights: normalized sums to one across random shapes") {
    // Prompt-scale token counts; the 1e-8 denominator term bounds the
    // deviation by 1e-8 / sum(raw), under 1e-9 once sum(raw) >= 10.
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        int S = 20 + static_cast<int>(rng() % 200);
        bool with_entity = rng() % 2;
        auto w = build_token_weights("a young man with a red scarf walks through the library",
                                     with_entity ? std::vector<std::string>{"young man"}
                                                 : std::vector<std::string>{},
                                     {"red scarf"}, S);
        double sum = 0.0;
        for (double n : w.normalized) sum += n;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(static_cast<int>(w.normalized.size()) == S);
        for (double r : w.raw) CHECK(r > 0.0);
    }
}

TEST_CASE("entity score: zero frame keys give zero") {
    std::mt19937_64 rng(1);
    KeyBlock text = random_block(rng, 3, 2, 8);
    KeyBlock frame;
    frame.layer_id = 0;
    frame.keys = KeyTensor(4, 2, 8);
    frame.values = KeyTensor(4, 2, 8);
    auto w = build_token_weights("a b c", {}, {}, 3);
    CHECK(entity_score_layer(text, frame, w) == 0.0);
}

TEST_CASE("entity score: unit-vector identity configuration") {
    // H=1, d=4; every text and visual key is the same unit vector -> 1/sqrt(4).
    KeyBlock text;
    text.keys = KeyTensor(5, 1, 4);
    text.values = KeyTensor(5, 1, 4);
    KeyBlock frame;
    frame.keys = KeyTensor(3, 1, 4);
    frame.values = KeyTensor(3, 1, 4);
    for (int t = 0; t < 5; ++t) text.keys.at(t, 0, 1) = 1.0f;
    for (int v = 0; v < 3; ++v) frame.keys.at(v, 0, 1) = 1.0f;
    auto w = build_token_weights("a b c d e", {}, {}, 5);
    CHECK(entity_score_layer(text, frame, w) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("entity score matches the scalar triple-loop oracle") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 50; ++i) {
        int S = 1 + static_cast<int>(rng() % 6);
        int H = 1 + static_cast<int>(rng() % 4);
        int d = 1 + static_cast<int>(rng() % 16);
        int n_f = 1 + static_cast<int>(rng() % 8);
        KeyBlock text = random_block(rng, S, H, d);
        KeyBlock frame = random_block(rng, n_f, H, d);
        auto w = build_token_weights("one two three four five six", {"two"}, {}, S);
        double got = entity_score_layer(text, frame, w);
        double want = testoracle::entity_score_scalar(text, frame, w.normalized);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("entity score: multi-layer weighting and missing layers") {
    std::mt19937_64 rng(5);
    KeyBlock t0 = random_block(rng, 3, 2, 4, 0);
    KeyBlock t1 = random_block(rng, 3, 2, 4, 1);
    KeyBlock f0 = random_block(rng, 2, 2, 4, 0);
    KeyBlock f1 = random_block(rng, 2, 2, 4, 1);
    auto w = build_token_weights("a b c", {}, {}, 3);

    ScoringConfig cfg;
    cfg.layers = {{0, 0.25}, {1, 0.75}};
    double got = entity_score(KvBlocks{t0, t1}, KvBlocks{f0, f1}, w, cfg);
    double want = 0.25 * entity_score_layer(t0, f0, w) + 0.75 * entity_score_layer(t1, f1, w);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    ScoringConfig missing;
    missing.layers = {{7, 1.0}};
    CHECK_THROWS_AS(entity_score(KvBlocks{t0}, KvBlocks{f0}, w, missing),
                    std::invalid_argument);
}

TEST_CASE("entity score: shape mismatches are hard errors") {
    std::mt19937_64 rng(6);
    KeyBlock text = random_block(rng, 3, 2, 4);
    KeyBlock frame = random_block(rng, 2, 2, 8);  // different head_dim
    auto w = build_token_weights("a b c", {}, {}, 3);
    CHECK_THROWS_AS(entity_score_layer(text, frame, w), std::invalid_argument);
    auto w2 = build_token_weights("a b", {}, {}, 2);  // wrong weight length
    KeyBlock frame_ok = random_block(rng, 2, 2, 4);
    CHECK_THROWS_AS(entity_score_layer(text, frame_ok, w2), std::invalid_argument);
}

TEST_CASE("scale covariance: scaling visual keys scales the score") {
    std::mt19937_64 rng(11);
    KeyBlock text = random_block(rng, 4, 2, 8);
    auto w = build_token_weights("a b c d", {}, {}, 4);
    std::vector<KeyBlock> frames;
    std::vector<double> base;
    for (int i = 0; i < 3; ++i) {
        frames.push_back(random_block(rng, 5, 2, 8));
        base.push_back(entity_score_layer(text, frames[i], w));
    }
    const double c = 3.7;
    std::vector<double> scaled;
    for (auto f : frames) {
        for (auto& v : f.keys.data) v = static_cast<float>(v * c);
        scaled.push_back(entity_score_layer(text, f, w));
    }
    for (int i = 0; i < 3; ++i) CHECK(scaled[i] == doctest::Approx(base[i] * c).epsilon(1e-6));

    // Common positive scale leaves the min-max argmax unchanged.
    auto nb = normalize_entity_scores(base);
    auto ns = normalize_entity_scores(scaled);
    auto argmax = [](const std::vector<double>& v) {
        return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
    };
    CHECK(argmax(nb) == argmax(ns));
}

TEST_CASE("normalize_entity_scores") {
    CHECK(normalize_entity_scores({1, 2, 3}) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(normalize_entity_scores({4, 4, 4}) == std::vector<double>{0.5, 0.5, 0.5});
    CHECK(normalize_entity_scores({7}) == std::vector<double>{0.5});
    CHECK_THROWS_AS(normalize_entity_scores({}), std::invalid_argument);
}

TEST_CASE("fuse_score anchors and bounds") {
    CHECK(fuse_score(1.0, 0.0, 0.3) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(fuse_score(0.0, 1.0, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(fuse_score(0.5, 0.5, 0.99) == doctest::Approx(0.5).epsilon(1e-12));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        double f = fuse_score(u(rng), u(rng), u(rng));
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
    }
}

TEST_CASE("select_archive_frame: argmax with earliest tie") {
    CHECK(select_archive_frame({0.2, 0.9, 0.4}) == 1);
    CHECK(select_archive_frame({0.5, 0.5}) == 0);
    CHECK(select_archive_frame({0.42}) == 0);
    CHECK_THROWS_AS(select_archive_frame({}), std::invalid_argument);
}

TEST_CASE("greedy retrieval: coverage first, then minimum-two fill") {
    FrameArchive archive;
    archive.add(frame_with({1}, 0.9, 0.9));        // frame 1
    archive.add(frame_with({2}, 0.8, 0.8));        // frame 2
    archive.add(frame_with({1, 2}, 0.5, 0.5));     // frame 3

    ActiveMemory memory = greedy_retrieve(archive, {1, 2}, 4);
    // Frame 3 covers both ids; the minimum-two rule pulls in frame 1 (best fused).
    REQUIRE(memory.frame_ids == std::vector<int>{1, 3});  // temporal order
    CHECK(memory.assembled_kv.size() == 1);
    CHECK(memory.assembled_kv[0].tokens() == 4);  // 2 + 2 tokens
}

TEST_CASE("greedy retrieval: trivial cases") {
    FrameArchive empty;
    CHECK(greedy_retrieve(empty, {1}, 4).frame_ids.empty());

    FrameArchive archive;
    archive.add(frame_with({1}, 0.4, 0.4));
    archive.add(frame_with({1}, 0.7, 0.7));
    ActiveMemory one = greedy_retrieve(archive, {1}, 4);
    CHECK(one.frame_ids == std::vector<int>{2});  // higher entity score wins the tie
}

TEST_CASE("greedy retrieval: budget fill is capped") {
    FrameArchive archive;
    for (int i = 0; i < 6; ++i) archive.add(frame_with({i % 3 + 1}, 0.1 * i, 0.1 * i));
    ActiveMemory m = greedy_retrieve(archive, {1, 2, 3}, 2);
    CHECK(m.frame_ids.size() == 2);  // cap binds before coverage completes
}

TEST_CASE("greedy retrieval: later temporal order breaks score ties") {
    FrameArchive archive;
    archive.add(frame_with({1}, 0.5, 0.5));
    archive.add(frame_with({1}, 0.5, 0.5));  // same gain, same score, fresher
    ActiveMemory m = greedy_retrieve(archive, {1}, 1);
    CHECK(m.frame_ids == std::vector<int>{2});
}

TEST_CASE("greedy feasibility on small exhaustive instances") {
    // All archives of <= 5 frames over 3 ids; cap 3 >= #ids, so greedy must
    // cover everything the archive can cover.
    const int kIds = 3;
    const std::uint32_t kMasks = 1u << kIds;
    std::vector<std::uint32_t> masks;
    std::function<void(std::uint32_t, std::size_t)> recurse = [&](std::uint32_t lo,
                                                                  std::size_t depth) {
        if (depth > 0) {
            FrameArchive archive;
            for (std::uint32_t m : masks) {
                std::set<int> ids;
                for (int b = 0; b < kIds; ++b) {
                    if (m & (1u << b)) ids.insert(b + 1);
                }
                archive.add(frame_with(ids, 0.1 * archive.size(), 0.05 * archive.size()));
            }
            std::set<int> active = {1, 2, 3};
            std::uint32_t coverable = 0;
            for (std::uint32_t m : masks) coverable |= m;
            ActiveMemory mem = greedy_retrieve(archive, active, 3);
            std::uint32_t covered = 0;
            for (int fid : mem.frame_ids) {
                covered |= masks[static_cast<std::size_t>(fid) - 1];
            }
            CHECK((covered & coverable) == coverable);
        }
        if (depth == 5) return;
        for (std::uint32_t m = lo; m < kMasks; ++m) {
            masks.push_back(m);
            recurse(m, depth + 1);
            masks.pop_back();
        }
    };
    recurse(0, 0);
}

TEST_CASE("assemble_memory_kv: concatenation, ordering, and shape errors") {
    ArchivedFrame a = frame_with({1}, 0.5, 0.5, 4);
    ArchivedFrame b = frame_with({2}, 0.5, 0.5, 4);
    a.temporal_order = 2;
    b.temporal_order = 1;
    a.kv[0].keys.at(0, 0, 0) = 7.0f;
    b.kv[0].keys.at(0, 0, 0) = 9.0f;

    // Supplied out of order; output must still be temporally sorted.
    KvBlocks out = assemble_memory_kv({&a, &b});
    REQUIRE(out.size() == 1);
    CHECK(out[0].tokens() == 8);
    CHECK(out[0].keys.at(0, 0, 0) == 9.0f);  // b first
    CHECK(out[0].keys.at(4, 0, 0) == 7.0f);

    CHECK(assemble_memory_kv({}).empty());

    ArchivedFrame c = frame_with({3}, 0.5, 0.5, 4);
    c.kv[0].keys = KeyTensor(4, 2, 2);  // different head count
    c.kv[0].values = KeyTensor(4, 2, 2);
    CHECK_THROWS_AS(assemble_memory_kv({&a, &c}), std::invalid_argument);
}

TEST_CASE("archive export round trip with sidecar") {
    std::mt19937_64 rng(13);
    FrameArchive archive;
    for (int i = 0; i < 3; ++i) {
        ArchivedFrame f;
        f.prompt_index = 1 + i / 2;
        f.chunk_index = i + 1;
        f.entity_ids = {1, i + 1};
        f.entity_score_raw = 0.1 * i;
        f.entity_score_norm = 0.2 * i;
        f.visual_score = 0.5;
        f.fused_score = 0.3 * i;
        f.kv.push_back(random_block(rng, 4, 2, 8));
        archive.add(std::move(f));
    }
    auto dir = std::filesystem::temp_directory_path() / "idstream_memtest";
    std::filesystem::create_directories(dir);
    write_archive(archive, dir / "archive.json", true);
    FrameArchive back = read_archive(dir / "archive.json");
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.frames()[i].frame_id == archive.frames()[i].frame_id);
        CHECK(back.frames()[i].entity_ids == archive.frames()[i].entity_ids);
        CHECK(back.frames()[i].fused_score == archive.frames()[i].fused_score);
        REQUIRE(back.frames()[i].kv.size() == 1);
        CHECK(back.frames()[i].kv[0].keys.data == archive.frames()[i].kv[0].keys.data);
        CHECK(back.frames()[i].kv[0].values.data == archive.frames()[i].kv[0].values.data);
    }

    // Metadata-only export still loads, with no KV attached.
    write_archive(archive, dir / "meta.json", false);
    FrameArchive meta = read_archive(dir / "meta.json");
    REQUIRE(meta.size() == 3);
    CHECK(meta.frames()[0].kv.empty());
}
