// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <set>

#include "idstream/oracles.hpp"
#include "idstream/registry.hpp"

using namespace idstream;

namespace {

/// Oracle returning a fixed body for every call; counts invocations.
class CannedOracle : public Oracle {
public:
    explicit CannedOracle(std::string body, bool ok = true) : body_(std::move(body)), ok_(ok) {}
    OracleResponse call(const OracleRequest&) override {
        ++calls;
        return {ok_, body_};
    }
    int calls = 0;

private:
    std::string body_;
    bool ok_;
};

}  // namespace

TEST_CASE("descriptor invariants") {
    auto d = make_descriptor("  young man  ", {"Black Hair", "black hair", " ", "red scarf"});
    CHECK(d.name == "young man");
    CHECK(d.attributes == std::vector<std::string>{"Black Hair", "red scarf"});
    CHECK(d.surface_text == "young man");
    CHECK_THROWS_AS(make_descriptor("   ", {}), std::invalid_argument);
}

TEST_CASE("novelty markers match whole words only") {
    CHECK(has_novelty_marker("another barista"));
    CHECK(has_novelty_marker("the other man"));
    CHECK(has_novelty_marker("a NEW visitor"));
    CHECK(has_novelty_marker("a different waiter"));
    CHECK(has_novelty_marker("the second guard"));
    CHECK(has_novelty_marker("a third dancer"));
    CHECK_FALSE(has_novelty_marker("the barista"));
    CHECK_FALSE(has_novelty_marker("a renewed smile"));
    CHECK_FALSE(has_novelty_marker("mother and son"));  // "other" embedded in a word
}

TEST_CASE("heuristic extraction picks up modifiers and strips articles") {
    auto ds = heuristic_extract("A young man reads; a woman enters.");
    REQUIRE(ds.size() == 2);
    CHECK(ds[0].name == "young man");
    CHECK(ds[1].name == "woman");

    CHECK(heuristic_extract("An empty library at dusk.").empty());

    auto two = heuristic_extract("the man and the other man");
    REQUIRE(two.size() == 2);
    CHECK(two[0].name == "man");
    CHECK(two[1].name == "other man");
    CHECK_FALSE(has_novelty_marker(two[0].surface_text));
    CHECK(has_novelty_marker(two[1].surface_text));
}

TEST_CASE("heuristic extraction respects punctuation and duplicates") {
    // "woman" follows a semicolon; the modifier walk must not cross it.
    auto ds = heuristic_extract("tall shelves; woman waits");
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].name == "woman");

    auto dup = heuristic_extract("a man sits. a man stands.");
    CHECK(dup.size() == 1);  // identical names collapse

    auto lex = heuristic_extract("the barista pours", {"barista"});
    REQUIRE(lex.size() == 1);
    CHECK(lex[0].name == "barista");
}

TEST_CASE("normalization and heuristic matching") {
    CHECK(normalize_name("The  Barista") == "barista");
    CHECK(normalize_name("a Young Man") == "young man");

    GlobalRegistry reg;
    CHECK_FALSE(heuristic_match(make_descriptor("barista", {}), reg).has_value());

    reg.create_entry(make_descriptor("barista", {"green apron"}), 1);
    auto hit = heuristic_match(make_descriptor("The Barista", {}), reg);
    REQUIRE(hit.has_value());
    CHECK(*hit == 1);

    reg.create_entry(make_descriptor("man", {}), 1);
    CHECK_FALSE(heuristic_match(make_descriptor("young man", {}), reg).has_value());
}

TEST_CASE("match_or_create: first prompt always allocates") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("man", {}), 1);
    CannedOracle oracle(R"({"matched_id": 1})");
    auto out = match_or_create(make_descriptor("man", {}), reg, 1, oracle);
    CHECK(out.is_new);
    CHECK(out.global_id == 2);
    CHECK(oracle.calls == 0);
}

TEST_CASE("match_or_create: novelty marker skips the oracle") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("man", {}), 1);
    CannedOracle oracle(R"({"matched_id": 1})");
    auto out = match_or_create(make_descriptor("another man", {}), reg, 2, oracle);
    CHECK(out.is_new);
    CHECK(oracle.calls == 0);
}

TEST_CASE("match_or_create: matched id must already exist") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("man", {}), 1);
    reg.create_entry(make_descriptor("woman", {}), 1);
    CannedOracle oracle(R"({"matched_id": 7})");
    auto out = match_or_create(make_descriptor("he", {}), reg, 2, oracle);
    CHECK(out.is_new);
    CHECK(out.global_id == 3);
}

TEST_CASE("match_or_create: reuse merges aliases, attributes, instances") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("young man", {"black hair"}), 1);
    CannedOracle oracle(R"({"matched_id": 1})");
    auto out = match_or_create(make_descriptor("the protagonist", {"Black Hair", "blue coat"}),
                               reg, 2, oracle);
    CHECK_FALSE(out.is_new);
    CHECK(out.global_id == 1);
    const RegistryEntry* e = reg.find(1);
    REQUIRE(e);
    CHECK(e->canonical_name == "young man");
    CHECK(e->aliases == std::vector<std::string>{"young man", "the protagonist"});
    CHECK(e->attributes == std::vector<std::string>{"black hair", "blue coat"});
    REQUIRE(e->instances.size() == 2);
    CHECK(e->instances[1].first == 2);

    // Same alias again: still exactly once.
    auto again = match_or_create(make_descriptor("the protagonist", {}), reg, 3, oracle);
    CHECK_FALSE(again.is_new);
    CHECK(reg.find(1)->aliases.size() == 2);
}

TEST_CASE("match_or_create: oracle failure means a new id") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("man", {}), 1);
    CannedOracle broken("", false);
    auto out = match_or_create(make_descriptor("he", {}), reg, 2, broken);
    CHECK(out.is_new);
}

TEST_CASE("apply_corrections") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("man", {"blue coat"}), 1);
    CHECK(reg.apply_corrections({{1, {"red scarf"}}}) == 1);
    CHECK(reg.find(1)->attributes == std::vector<std::string>{"red scarf"});
    CHECK(reg.apply_corrections({{9, {"hat"}}}) == 0);
    CHECK(reg.apply_corrections({}) == 0);
}

TEST_CASE("parse_entities: structured response, empty list, and fallbacks") {
    {
        CannedOracle good(R"({"entities":[{"entity":"young man","attrs":["black hair"]}]})");
        auto ds = parse_entities("a young man reads", good);
        REQUIRE(ds.size() == 1);
        CHECK(ds[0].name == "young man");
        CHECK(ds[0].attributes == std::vector<std::string>{"black hair"});
    }
    {
        CannedOracle empty(R"({"entities":[]})");
        CHECK(parse_entities("an empty library", empty).empty());
    }
    {
        CannedOracle broken("", false);
        auto ds = parse_entities("a young man reads", broken);
        REQUIRE(ds.size() == 1);  // heuristic fallback
        CHECK(ds[0].name == "young man");
    }
    {
        CannedOracle prose("I could not find any JSON to give you.");
        auto ds = parse_entities("a young man reads", prose);
        REQUIRE(ds.size() == 1);
        CHECK(ds[0].name == "young man");
    }
    {
        CannedOracle sibling(
            "Sure! Here you go: {\"entities\":[{\"entity\":\"young man\",\"attrs\":"
            "[\"black hair\"]},{\"bogus\":1},{\"entity\":\"\"}]}");
        auto ds = parse_entities("a young man reads", sibling);
        REQUIRE(ds.size() == 1);  // malformed siblings dropped
        CHECK(ds[0].name == "young man");
    }
}

TEST_CASE("registry json round trip") {
    GlobalRegistry reg;
    reg.create_entry(make_descriptor("young man", {"black hair"}), 1);
    CannedOracle oracle(R"({"matched_id": 1})");
    match_or_create(make_descriptor("the protagonist", {"blue coat"}), reg, 2, oracle);
    reg.create_entry(make_descriptor("woman", {"red scarf"}), 2);

    nlohmann::json j = reg.to_json();
    GlobalRegistry back = GlobalRegistry::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.next_id() == reg.next_id());
    CHECK(back.find(1)->aliases == reg.find(1)->aliases);
}

TEST_CASE("property: id monotonicity, novelty dominance, conservative matching") {
    std::mt19937_64 rng(20260810);
    const std::vector<std::string> names = {"man",       "woman",       "boy",
                                            "other man", "protagonist", "girl"};
    for (int trial = 0; trial < 50; ++trial) {
        GlobalRegistry reg;
        int max_seen_next = reg.next_id();
        std::set<int> ids;
        for (int step = 0; step < 40; ++step) {
            int prompt_index = 1 + static_cast<int>(rng() % 4);
            const std::string& name = names[rng() % names.size()];
            // The oracle sometimes proposes ids that do not exist.
            int proposal = static_cast<int>(rng() % 8);
            CannedOracle oracle("{\"matched_id\": " + std::to_string(proposal) + "}");

            std::set<int> before = ids;
            bool existed = reg.contains(proposal);
            auto out = match_or_create(make_descriptor(name, {}), reg, prompt_index, oracle);

            CHECK(reg.next_id() >= max_seen_next);
            max_seen_next = reg.next_id();
            ids.insert(out.global_id);
            for (int id : before) CHECK(reg.contains(id));  // ids never disappear

            if (prompt_index == 1) CHECK(out.is_new);
            if (has_novelty_marker(name)) CHECK(out.is_new);
            if (!out.is_new) {
                CHECK(existed);
                CHECK(out.global_id == proposal);
                int count = 0;
                for (const auto& alias : reg.find(out.global_id)->aliases) {
                    if (alias == name) ++count;
                }
                CHECK(count == 1);
            }
        }
    }
}
