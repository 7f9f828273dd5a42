// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "idstream/pipeline.hpp"
#include "idstream/synth.hpp"

namespace idstream {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

enum class OracleTransport { mock, http, heuristic, neutral };

/// Full engine configuration: cache layout, scoring, transition, synthetic
/// world, oracle wiring, timing, and the prompt schedule.
struct EngineConfig {
    std::uint64_t seed = 7;
    SessionSetup session;     // layout, scoring, apt, modes, lexicon, timing
    WorldConfig world;
    OracleTransport transport = OracleTransport::heuristic;
    std::string mock_script;  // path, for transport == mock
    std::string endpoint;     // for transport == http
};

/// Built-in defaults: six 5-chunk prompts with recurring characters, fixed
/// clock, heuristic oracles.
EngineConfig default_config();

/// Parses and validates a config document. Unknown keys are rejected.
EngineConfig parse_config(const nlohmann::json& j);

EngineConfig load_config(const std::filesystem::path& path);

nlohmann::json config_to_json(const EngineConfig& config);

}  // namespace idstream
