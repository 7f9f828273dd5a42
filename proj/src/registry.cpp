// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/registry.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>
#include <stdexcept>

#include "idstream/oracles.hpp"

namespace idstream {

namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

bool is_article(std::string_view w) { return w == "a" || w == "an" || w == "the"; }

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

std::vector<std::string> dedup_case_insensitive(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    std::vector<std::string> seen;
    for (const auto& raw : items) {
        std::string t = trim(raw);
        if (t.empty()) continue;
        std::string key = to_lower(t);
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
            seen.push_back(key);
            out.push_back(t);
        }
    }
    return out;
}

void log_warn(const std::string& msg) { std::cerr << "[idstream] warn: " << msg << "\n"; }

}  // namespace

EntityDescriptor make_descriptor(std::string name, std::vector<std::string> attributes,
                                 std::string surface_text) {
    EntityDescriptor d;
    d.name = trim(name);
    if (d.name.empty()) throw std::invalid_argument("EntityDescriptor: empty name");
    d.attributes = dedup_case_insensitive(attributes);
    d.surface_text = surface_text.empty() ? d.name : std::move(surface_text);
    return d;
}

const RegistryEntry* GlobalRegistry::find(int id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

int GlobalRegistry::create_entry(const EntityDescriptor& descriptor, int prompt_index) {
    int id = next_id_++;
    RegistryEntry e;
    e.global_id = id;
    e.canonical_name = descriptor.name;
    e.aliases.push_back(descriptor.name);
    e.attributes = dedup_case_insensitive(descriptor.attributes);
    e.instances.emplace_back(prompt_index, descriptor);
    entries_.emplace(id, std::move(e));
    return id;
}

void GlobalRegistry::record_reuse(int id, const EntityDescriptor& descriptor, int prompt_index) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw std::invalid_argument("record_reuse: unknown id");
    RegistryEntry& e = it->second;
    if (std::find(e.aliases.begin(), e.aliases.end(), descriptor.name) == e.aliases.end()) {
        e.aliases.push_back(descriptor.name);
    }
    // Merge attributes: union, case-insensitive, first-seen order.
    std::vector<std::string> merged = e.attributes;
    merged.insert(merged.end(), descriptor.attributes.begin(), descriptor.attributes.end());
    e.attributes = dedup_case_insensitive(merged);
    e.instances.emplace_back(prompt_index, descriptor);
    std::stable_sort(e.instances.begin(), e.instances.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
}

int GlobalRegistry::apply_corrections(const std::map<int, std::vector<std::string>>& corrections) {
    int applied = 0;
    for (const auto& [id, attrs] : corrections) {
        auto it = entries_.find(id);
        if (it == entries_.end()) continue;
        it->second.attributes = dedup_case_insensitive(attrs);
        ++applied;
    }
    return applied;
}

nlohmann::json GlobalRegistry::to_json() const {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [id, e] : entries_) {
        nlohmann::json instances = nlohmann::json::array();
        for (const auto& [pi, d] : e.instances) {
            instances.push_back({{"prompt_index", pi},
                                 {"descriptor",
                                  {{"name", d.name},
                                   {"attributes", d.attributes},
                                   {"surface_text", d.surface_text}}}});
        }
        entries[std::to_string(id)] = {{"global_id", e.global_id},
                                       {"canonical_name", e.canonical_name},
                                       {"aliases", e.aliases},
                                       {"attributes", e.attributes},
                                       {"instances", instances}};
    }
    return {{"next_id", next_id_}, {"entries", entries}};
}

GlobalRegistry GlobalRegistry::from_json(const nlohmann::json& j) {
    GlobalRegistry r;
    r.next_id_ = j.at("next_id").get<int>();
    for (const auto& [key, v] : j.at("entries").items()) {
        RegistryEntry e;
        e.global_id = v.at("global_id").get<int>();
        if (std::to_string(e.global_id) != key) {
            throw std::invalid_argument("registry json: key/global_id mismatch");
        }
        e.canonical_name = v.at("canonical_name").get<std::string>();
        e.aliases = v.at("aliases").get<std::vector<std::string>>();
        e.attributes = v.at("attributes").get<std::vector<std::string>>();
        for (const auto& inst : v.at("instances")) {
            EntityDescriptor d;
            d.name = inst.at("descriptor").at("name").get<std::string>();
            d.attributes = inst.at("descriptor").at("attributes").get<std::vector<std::string>>();
            d.surface_text = inst.at("descriptor").at("surface_text").get<std::string>();
            e.instances.emplace_back(inst.at("prompt_index").get<int>(), std::move(d));
        }
        if (e.global_id >= r.next_id_) {
            throw std::invalid_argument("registry json: next_id not above max id");
        }
        r.entries_.emplace(e.global_id, std::move(e));
    }
    return r;
}

std::string normalize_name(std::string_view text) {
    auto words = split_words(to_lower(text));
    std::size_t start = 0;
    while (start < words.size() && is_article(words[start])) ++start;
    std::string out;
    for (std::size_t i = start; i < words.size(); ++i) {
        if (!out.empty()) out.push_back(' ');
        out += words[i];
    }
    return out;
}

bool has_novelty_marker(std::string_view surface_text) {
    static const std::vector<std::string> kMarkers = {"another", "other",  "new",
                                                      "different", "second", "third"};
    for (const auto& w : split_words(to_lower(surface_text))) {
        if (std::find(kMarkers.begin(), kMarkers.end(), w) != kMarkers.end()) return true;
    }
    return false;
}

std::vector<EntityDescriptor> heuristic_extract(std::string_view prompt_text,
                                                const std::vector<std::string>& lexicon) {
    // Tokenize with character positions so modifier adjacency can be checked.
    struct Token {
        std::string word;
        std::size_t begin = 0;
        std::size_t end = 0;     // one past last char
        bool punct_before = false;  // non-space separator between this and previous token
    };
    std::vector<Token> tokens;
    std::string lower = to_lower(prompt_text);
    std::size_t i = 0;
    bool pending_punct = false;
    while (i < lower.size()) {
        char c = lower[i];
        if (std::isalpha(static_cast<unsigned char>(c))) {
            Token t;
            t.begin = i;
            while (i < lower.size() && std::isalpha(static_cast<unsigned char>(lower[i]))) ++i;
            t.end = i;
            t.word = lower.substr(t.begin, t.end - t.begin);
            t.punct_before = pending_punct;
            pending_punct = false;
            tokens.push_back(std::move(t));
        } else {
            if (!std::isspace(static_cast<unsigned char>(c))) pending_punct = true;
            ++i;
        }
    }

    auto in_lexicon = [&](const std::string& w) {
        return std::find(lexicon.begin(), lexicon.end(), w) != lexicon.end();
    };

    std::vector<EntityDescriptor> out;
    std::vector<std::string> seen_names;
    std::vector<bool> consumed(tokens.size(), false);
    for (std::size_t k = 0; k < tokens.size(); ++k) {
        if (!in_lexicon(tokens[k].word) || consumed[k]) continue;
        // Walk back over up to two adjacent modifier words ("young man",
        // "other man"); stop at articles, punctuation, or other lexicon hits.
        std::size_t first = k;
        int picked = 0;
        while (first > 0 && picked < 2) {
            const Token& prev = tokens[first - 1];
            if (tokens[first].punct_before) break;
            if (is_article(prev.word) || in_lexicon(prev.word)) break;
            --first;
            ++picked;
        }
        std::string name;
        for (std::size_t t = first; t <= k; ++t) {
            if (!name.empty()) name.push_back(' ');
            name += tokens[t].word;
        }
        // Surface text keeps the article when directly adjacent.
        std::size_t surf_first = first;
        if (surf_first > 0 && is_article(tokens[surf_first - 1].word) &&
            !tokens[surf_first].punct_before) {
            --surf_first;
        }
        std::string surface(prompt_text.substr(tokens[surf_first].begin,
                                               tokens[k].end - tokens[surf_first].begin));
        if (std::find(seen_names.begin(), seen_names.end(), name) != seen_names.end()) continue;
        seen_names.push_back(name);
        for (std::size_t t = first; t <= k; ++t) consumed[t] = true;
        out.push_back(make_descriptor(name, {}, surface));
    }
    return out;
}

std::optional<int> heuristic_match(const EntityDescriptor& descriptor,
                                   const GlobalRegistry& registry) {
    std::string needle = normalize_name(descriptor.name);
    if (needle.empty()) return std::nullopt;
    for (const auto& [id, entry] : registry.entries()) {
        for (const auto& alias : entry.aliases) {
            if (normalize_name(alias) == needle) return id;
        }
    }
    return std::nullopt;
}

std::vector<EntityDescriptor> parse_entities(const std::string& prompt_text, Oracle& oracle,
                                             const std::vector<std::string>& lexicon,
                                             double deadline_seconds) {
    if (prompt_text.empty()) throw std::invalid_argument("parse_entities: empty prompt");
    OracleResponse resp = oracle.call(build_extract_request(prompt_text, deadline_seconds));
    if (resp.ok) {
        ParsedExtraction parsed = parse_extract_response(resp.body);
        if (parsed.structured) return parsed.entities;
        log_warn("extraction response had no parseable structure; using heuristic");
    } else {
        log_warn("extraction oracle failed; using heuristic");
    }
    return heuristic_extract(prompt_text, lexicon);
}

MatchOutcome match_or_create_with(const EntityDescriptor& descriptor, GlobalRegistry& registry,
                                  int prompt_index, const MatchFn& matcher) {
    if (prompt_index < 1) throw std::invalid_argument("match_or_create: prompt_index < 1");
    if (prompt_index == 1 || has_novelty_marker(descriptor.surface_text)) {
        return {registry.create_entry(descriptor, prompt_index), true};
    }
    std::optional<int> matched;
    if (matcher) matched = matcher(descriptor, registry);
    if (matched && registry.contains(*matched)) {
        registry.record_reuse(*matched, descriptor, prompt_index);
        return {*matched, false};
    }
    return {registry.create_entry(descriptor, prompt_index), true};
}

MatchOutcome match_or_create(const EntityDescriptor& descriptor, GlobalRegistry& registry,
                             int prompt_index, Oracle& oracle, double deadline_seconds) {
    MatchFn via_oracle = [&oracle, deadline_seconds](const EntityDescriptor& d,
                                                     const GlobalRegistry& r) {
        OracleResponse resp = oracle.call(build_match_request(d, r, deadline_seconds));
        if (!resp.ok) return std::optional<int>();
        return parse_match_response(resp.body).matched_id;
    };
    return match_or_create_with(descriptor, registry, prompt_index, via_oracle);
}

}  // namespace idstream
