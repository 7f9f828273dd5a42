// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/report.hpp"

#include <cstdlib>

namespace idstream {

nlohmann::json session_report(const SessionResult& result, const EngineConfig& config) {
    nlohmann::json prompts = nlohmann::json::array();
    for (const auto& p : result.prompts) {
        prompts.push_back({{"prompt_index", p.prompt_index},
                           {"text", p.text},
                           {"active_ids", p.active_ids},
                           {"active_names", p.active_names},
                           {"is_new", p.is_new},
                           {"retrieved_frames", p.retrieved_frames},
                           {"w_apt", p.w_apt}});
    }
    nlohmann::json chunks = nlohmann::json::array();
    for (const auto& ct : result.chunks) {
        chunks.push_back({{"chunk_index", ct.chunk_index},
                          {"prompt_index", ct.prompt_index},
                          {"tau", ct.tau},
                          {"alpha", ct.alpha},
                          {"w_apt", ct.w_apt},
                          {"memory_frame_ids", ct.memory_frame_ids},
                          {"source", ct.source_evicted ? "evicted" : "clean_context"},
                          {"source_chunk", ct.source_chunk},
                          {"archived_frame_id", ct.archived_frame_id},
                          {"entity_score_raw", ct.entity_score_raw},
                          {"entity_score_norm", ct.entity_score_norm},
                          {"visual_score", ct.visual_score},
                          {"fused_score", ct.fused_score},
                          {"visual_neutral", ct.visual_neutral},
                          {"corrections_applied", ct.corrections_applied},
                          {"chunk_seconds", ct.chunk_seconds},
                          {"blocking_wait", ct.blocking_wait},
                          {"alignment", ct.alignment}});
    }
    nlohmann::json efficiency = {{"e2e_seconds", result.efficiency.e2e_seconds},
                                 {"per_chunk_seconds", result.efficiency.per_chunk_seconds},
                                 {"fps", result.efficiency.fps},
                                 {"blocking_wait_total", result.efficiency.blocking_wait_total},
                                 {"recache_count", result.efficiency.recache_count}};
    return {{"config", config_to_json(config)},
            {"registry", result.registry.to_json()},
            {"archive", archive_to_json(result.archive, "")},
            {"prompts", prompts},
            {"chunks", chunks},
            {"efficiency", efficiency}};
}

SimulationOutput run_simulation(const EngineConfig& config) {
    SyntheticWorld world(config.world);

    MockOracle mock;
    HttpOracle* http = nullptr;
    std::unique_ptr<HttpOracle> http_holder;
    NeutralOracle neutral;

    OracleSet oracles;
    switch (config.transport) {
        case OracleTransport::mock:
            if (!config.mock_script.empty()) mock = MockOracle::from_file(config.mock_script);
            oracles.extract = &mock;
            oracles.match = &mock;
            oracles.verify = &mock;
            break;
        case OracleTransport::http: {
            std::string endpoint = config.endpoint;
            if (const char* env = std::getenv("IDSTREAM_ORACLE_ENDPOINT")) endpoint = env;
            if (endpoint.empty()) throw ConfigError("oracles.endpoint: required for http");
            http_holder = std::make_unique<HttpOracle>(endpoint);
            http = http_holder.get();
            oracles.extract = http;
            oracles.match = http;
            oracles.verify = http;
            break;
        }
        case OracleTransport::heuristic:
            oracles.verify = &neutral;
            break;
        case OracleTransport::neutral:
            oracles.extract = &neutral;
            oracles.match = &neutral;
            oracles.verify = &neutral;
            break;
    }

    SimulationOutput out;
    out.result = run_session(config.session, world, oracles);
    out.report = session_report(out.result, config);
    return out;
}

}  // namespace idstream
