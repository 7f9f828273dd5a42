// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace idstream {

class Oracle;

/// Structured entity parsed from a prompt: a short name, its stable visual
/// attributes, and the raw surface span used for novelty detection.
struct EntityDescriptor {
    std::string name;
    std::vector<std::string> attributes;
    std::string surface_text;
};

/// Builds a descriptor with the type invariants applied: trimmed non-empty
/// name, attributes deduplicated case-insensitively in first-seen order.
EntityDescriptor make_descriptor(std::string name, std::vector<std::string> attributes,
                                 std::string surface_text = "");

struct RegistryEntry {
    int global_id = 0;
    std::string canonical_name;             // name from the first instance
    std::vector<std::string> aliases;       // every observed name, exactly once
    std::vector<std::string> attributes;    // merged, first-seen order
    std::vector<std::pair<int, EntityDescriptor>> instances;  // sorted by prompt index
};

/// Persistent entity registry. IDs are never reused or deleted.
class GlobalRegistry {
public:
    const std::map<int, RegistryEntry>& entries() const { return entries_; }
    int next_id() const { return next_id_; }
    bool contains(int id) const { return entries_.count(id) != 0; }
    const RegistryEntry* find(int id) const;

    int create_entry(const EntityDescriptor& descriptor, int prompt_index);
    void record_reuse(int id, const EntityDescriptor& descriptor, int prompt_index);

    /// Replaces the attribute list of each existing ID; unknown IDs are
    /// ignored. Returns the number of entries updated.
    int apply_corrections(const std::map<int, std::vector<std::string>>& corrections);

    nlohmann::json to_json() const;
    static GlobalRegistry from_json(const nlohmann::json& j);

private:
    std::map<int, RegistryEntry> entries_;
    int next_id_ = 1;
};

/// Lowercases, trims, collapses whitespace and strips leading articles
/// ("a", "an", "the").
std::string normalize_name(std::string_view text);

/// True iff the lowercased text contains one of the novelty markers
/// (another, other, new, different, second, third) as a whole word.
bool has_novelty_marker(std::string_view surface_text);

inline const std::vector<std::string>& default_lexicon() {
    static const std::vector<std::string> kLexicon = {"man",    "woman",      "boy",
                                                      "girl",   "person",     "protagonist"};
    return kLexicon;
}

/// Deterministic keyword extraction over a human-noun lexicon; picks up
/// adjacent modifiers ("young man", "other man") and strips articles.
std::vector<EntityDescriptor> heuristic_extract(std::string_view prompt_text,
                                                const std::vector<std::string>& lexicon =
                                                    default_lexicon());

/// Exact normalized surface-form match against the registered aliases.
/// No semantic alias resolution.
std::optional<int> heuristic_match(const EntityDescriptor& descriptor,
                                   const GlobalRegistry& registry);

/// Oracle-driven extraction with heuristic fallback on oracle failure.
std::vector<EntityDescriptor> parse_entities(const std::string& prompt_text, Oracle& oracle,
                                             const std::vector<std::string>& lexicon =
                                                 default_lexicon(),
                                             double deadline_seconds = 10.0);

struct MatchOutcome {
    int global_id = 0;
    bool is_new = false;
};

using MatchFn =
    std::function<std::optional<int>(const EntityDescriptor&, const GlobalRegistry&)>;

/// Core ID assignment: first prompt and novelty markers always allocate;
/// otherwise the matcher is consulted and accepted only for existing IDs.
MatchOutcome match_or_create_with(const EntityDescriptor& descriptor, GlobalRegistry& registry,
                                  int prompt_index, const MatchFn& matcher);

/// match_or_create backed by the LLM matching oracle. Oracle failure is
/// treated as "no match".
MatchOutcome match_or_create(const EntityDescriptor& descriptor, GlobalRegistry& registry,
                             int prompt_index, Oracle& oracle,
                             double deadline_seconds = 10.0);

}  // namespace idstream
