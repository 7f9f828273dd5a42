// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "json.hpp"

#include "idstream/config.hpp"
#include "idstream/pipeline.hpp"

namespace idstream {

/// Full session report: config echo, registry dump, archive metadata,
/// per-chunk traces and the efficiency block. Deterministic serialization
/// (ordered keys) so byte comparison is meaningful.
nlohmann::json session_report(const SessionResult& result, const EngineConfig& config);

/// Wires oracles and the synthetic generator from a config, runs a session,
/// and returns (result, report).
struct SimulationOutput {
    SessionResult result;
    nlohmann::json report;
};

SimulationOutput run_simulation(const EngineConfig& config);

}  // namespace idstream
