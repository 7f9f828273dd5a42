// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/config.hpp"

#include <fstream>
#include <set>

namespace idstream {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& scope) {
    if (!j.is_object()) throw ConfigError(scope + ": expected object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) throw ConfigError(scope + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

EngineConfig default_config() {
    EngineConfig c;
    c.seed = 7;
    c.session.schedule = {
        {"A young man with black hair reads quietly at a corner table in a small library.", 5},
        {"The man turns a page while a woman in a red scarf walks between the tall shelves.", 5},
        {"The woman browses the shelves alone as afternoon light crosses the empty tables.", 5},
        {"Dust drifts through the quiet aisles while the woman studies a worn atlas.", 5},
        {"The man returns to the table carrying a stack of old maps and sits down.", 5},
        {"The man and the woman spread the maps across the table and trace a route together.", 5},
    };
    c.world.seed = c.seed;
    return c;
}

EngineConfig parse_config(const nlohmann::json& j) {
    EngineConfig c = default_config();
    check_keys(j, {"seed", "cache", "scoring", "apt", "transition_mode", "world", "oracles",
                   "schedule", "timing", "verification", "lexicon", "memory_enabled"},
               "config");

    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("cache")) {
        const auto& cc = j.at("cache");
        check_keys(cc, {"n_sink", "n_local", "memory_cap", "chunk_size",
                        "pixel_frames_per_chunk"},
                   "cache");
        auto& layout = c.session.layout;
        layout.n_sink = get_or(cc, "n_sink", layout.n_sink);
        layout.n_local = get_or(cc, "n_local", layout.n_local);
        layout.memory_cap = get_or(cc, "memory_cap", layout.memory_cap);
        layout.chunk_size = get_or(cc, "chunk_size", layout.chunk_size);
        layout.pixel_frames_per_chunk =
            get_or(cc, "pixel_frames_per_chunk", layout.pixel_frames_per_chunk);
        layout.validate();
    }

    if (j.contains("scoring")) {
        const auto& sc = j.at("scoring");
        check_keys(sc, {"lambda", "layers", "epsilon_norm"}, "scoring");
        auto& scoring = c.session.scoring;
        scoring.lambda = get_or(sc, "lambda", scoring.lambda);
        if (scoring.lambda < 0.0 || scoring.lambda > 1.0) {
            throw ConfigError("scoring.lambda: must lie in [0,1]");
        }
        scoring.epsilon_norm = get_or(sc, "epsilon_norm", scoring.epsilon_norm);
        if (sc.contains("layers")) {
            scoring.layers.clear();
            double beta_sum = 0.0;
            for (const auto& lw : sc.at("layers")) {
                check_keys(lw, {"layer_id", "beta"}, "scoring.layers");
                LayerWeight w;
                w.layer_id = lw.at("layer_id").get<int>();
                w.beta = get_or(lw, "beta", 1.0);
                beta_sum += w.beta;
                scoring.layers.push_back(w);
            }
            if (scoring.layers.empty()) throw ConfigError("scoring.layers: empty");
            if (std::abs(beta_sum - 1.0) > 1e-9) {
                throw ConfigError("scoring.layers: betas must sum to 1");
            }
        }
    }

    if (j.contains("apt")) {
        const auto& ac = j.at("apt");
        check_keys(ac, {"w_min", "w_max", "d_delay"}, "apt");
        auto& apt = c.session.apt;
        apt.w_min = get_or(ac, "w_min", apt.w_min);
        apt.w_max = get_or(ac, "w_max", apt.w_max);
        apt.d_delay = get_or(ac, "d_delay", apt.d_delay);
        if (apt.w_min < 1 || apt.w_max < apt.w_min || apt.d_delay < 0) {
            throw ConfigError("apt: need 1 <= w_min <= w_max and d_delay >= 0");
        }
    }
    c.session.apt.chunk_size = c.session.layout.chunk_size;

    if (j.contains("transition_mode")) {
        std::string mode = j.at("transition_mode").get<std::string>();
        if (mode == "apt") c.session.transition_mode = TransitionMode::apt;
        else if (mode == "recache") c.session.transition_mode = TransitionMode::recache;
        else if (mode == "hard") c.session.transition_mode = TransitionMode::hard;
        else throw ConfigError("transition_mode: expected apt|recache|hard");
    }

    if (j.contains("world")) {
        const auto& wc = j.at("world");
        check_keys(wc, {"heads", "head_dim", "visual_tokens", "embed_dim", "text_capacity",
                        "layer_id", "latent_dim", "noise_sigma", "drift_rate"},
                   "world");
        c.world.heads = get_or(wc, "heads", c.world.heads);
        c.world.head_dim = get_or(wc, "head_dim", c.world.head_dim);
        c.world.visual_tokens = get_or(wc, "visual_tokens", c.world.visual_tokens);
        c.world.embed_dim = get_or(wc, "embed_dim", c.world.embed_dim);
        c.world.text_capacity = get_or(wc, "text_capacity", c.world.text_capacity);
        c.world.layer_id = get_or(wc, "layer_id", c.world.layer_id);
        c.world.latent_dim = get_or(wc, "latent_dim", c.world.latent_dim);
        c.world.noise_sigma = get_or(wc, "noise_sigma", c.world.noise_sigma);
        c.world.drift_rate = get_or(wc, "drift_rate", c.world.drift_rate);
        if (c.world.drift_rate < 0.0 || c.world.drift_rate > 1.0) {
            throw ConfigError("world.drift_rate: must lie in [0,1]");
        }
        if (c.world.noise_sigma < 0.0) throw ConfigError("world.noise_sigma: must be >= 0");
    }

    if (j.contains("oracles")) {
        const auto& oc = j.at("oracles");
        check_keys(oc, {"transport", "script", "endpoint", "deadline_seconds", "attach_images"},
                   "oracles");
        if (oc.contains("transport")) {
            std::string t = oc.at("transport").get<std::string>();
            if (t == "mock") c.transport = OracleTransport::mock;
            else if (t == "http") c.transport = OracleTransport::http;
            else if (t == "heuristic") c.transport = OracleTransport::heuristic;
            else if (t == "neutral") c.transport = OracleTransport::neutral;
            else throw ConfigError("oracles.transport: expected mock|http|heuristic|neutral");
        }
        c.mock_script = get_or<std::string>(oc, "script", "");
        c.endpoint = get_or<std::string>(oc, "endpoint", "");
        c.session.oracle_deadline_seconds =
            get_or(oc, "deadline_seconds", c.session.oracle_deadline_seconds);
        c.session.attach_images = get_or(oc, "attach_images", c.session.attach_images);
    }
    c.session.oracle_mode =
        c.transport == OracleTransport::heuristic ? OracleMode::heuristic : OracleMode::llm;

    if (j.contains("schedule")) {
        const auto& sc = j.at("schedule");
        if (!sc.is_array() || sc.empty()) throw ConfigError("schedule: expected non-empty array");
        c.session.schedule.clear();
        for (const auto& item : sc) {
            check_keys(item, {"prompt", "chunks"}, "schedule");
            PromptSpan span;
            span.text = item.at("prompt").get<std::string>();
            if (span.text.empty()) throw ConfigError("schedule.prompt: empty");
            span.chunks = get_or(item, "chunks", 5);
            if (span.chunks < 1) throw ConfigError("schedule.chunks: must be positive");
            c.session.schedule.push_back(std::move(span));
        }
    }

    if (j.contains("timing")) {
        const auto& tc = j.at("timing");
        check_keys(tc, {"clock", "chunk_seconds", "verify_seconds", "verify_schedule",
                        "worker_sleep_seconds"},
                   "timing");
        auto& timing = c.session.timing;
        if (tc.contains("clock")) {
            std::string mode = tc.at("clock").get<std::string>();
            if (mode == "fixed") timing.clock = ClockMode::fixed;
            else if (mode == "steady") timing.clock = ClockMode::steady;
            else throw ConfigError("timing.clock: expected fixed|steady");
        }
        timing.chunk_seconds = get_or(tc, "chunk_seconds", timing.chunk_seconds);
        timing.verify_seconds = get_or(tc, "verify_seconds", timing.verify_seconds);
        timing.worker_sleep_seconds =
            get_or(tc, "worker_sleep_seconds", timing.worker_sleep_seconds);
        if (tc.contains("verify_schedule")) {
            timing.verify_schedule = tc.at("verify_schedule").get<std::vector<double>>();
        }
        if (timing.chunk_seconds <= 0.0) throw ConfigError("timing.chunk_seconds: must be > 0");
    }

    if (j.contains("verification")) {
        const auto& vc = j.at("verification");
        check_keys(vc, {"queue_depth", "per_chunk_retrieval"}, "verification");
        c.session.verify_queue_depth = get_or(vc, "queue_depth", c.session.verify_queue_depth);
        if (c.session.verify_queue_depth < 1) {
            throw ConfigError("verification.queue_depth: must be >= 1");
        }
        c.session.per_chunk_retrieval =
            get_or(vc, "per_chunk_retrieval", c.session.per_chunk_retrieval);
    }

    if (j.contains("memory_enabled")) {
        c.session.memory_enabled = j.at("memory_enabled").get<bool>();
    }

    if (j.contains("lexicon")) {
        c.session.lexicon = j.at("lexicon").get<std::vector<std::string>>();
        if (c.session.lexicon.empty()) throw ConfigError("lexicon: empty");
    }

    c.world.seed = c.seed;
    c.world.chunk_size = c.session.layout.chunk_size;
    c.world.layer_id = c.session.scoring.layers.front().layer_id;
    return c;
}

EngineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

nlohmann::json config_to_json(const EngineConfig& c) {
    nlohmann::json schedule = nlohmann::json::array();
    for (const auto& span : c.session.schedule) {
        schedule.push_back({{"prompt", span.text}, {"chunks", span.chunks}});
    }
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& lw : c.session.scoring.layers) {
        layers.push_back({{"layer_id", lw.layer_id}, {"beta", lw.beta}});
    }
    std::string transport = c.transport == OracleTransport::mock        ? "mock"
                            : c.transport == OracleTransport::http      ? "http"
                            : c.transport == OracleTransport::heuristic ? "heuristic"
                                                                        : "neutral";
    std::string mode = c.session.transition_mode == TransitionMode::apt       ? "apt"
                       : c.session.transition_mode == TransitionMode::recache ? "recache"
                                                                              : "hard";
    return {
        {"seed", c.seed},
        {"cache",
         {{"n_sink", c.session.layout.n_sink},
          {"n_local", c.session.layout.n_local},
          {"memory_cap", c.session.layout.memory_cap},
          {"chunk_size", c.session.layout.chunk_size},
          {"pixel_frames_per_chunk", c.session.layout.pixel_frames_per_chunk}}},
        {"scoring",
         {{"lambda", c.session.scoring.lambda},
          {"layers", layers},
          {"epsilon_norm", c.session.scoring.epsilon_norm}}},
        {"apt",
         {{"w_min", c.session.apt.w_min},
          {"w_max", c.session.apt.w_max},
          {"d_delay", c.session.apt.d_delay}}},
        {"transition_mode", mode},
        {"world",
         {{"heads", c.world.heads},
          {"head_dim", c.world.head_dim},
          {"visual_tokens", c.world.visual_tokens},
          {"embed_dim", c.world.embed_dim},
          {"text_capacity", c.world.text_capacity},
          {"layer_id", c.world.layer_id},
          {"latent_dim", c.world.latent_dim},
          {"noise_sigma", c.world.noise_sigma},
          {"drift_rate", c.world.drift_rate}}},
        {"oracles",
         {{"transport", transport},
          {"script", c.mock_script},
          {"endpoint", c.endpoint},
          {"deadline_seconds", c.session.oracle_deadline_seconds},
          {"attach_images", c.session.attach_images}}},
        {"schedule", schedule},
        {"timing",
         {{"clock", c.session.timing.clock == ClockMode::fixed ? "fixed" : "steady"},
          {"chunk_seconds", c.session.timing.chunk_seconds},
          {"verify_seconds", c.session.timing.verify_seconds},
          {"worker_sleep_seconds", c.session.timing.worker_sleep_seconds}}},
        {"verification",
         {{"queue_depth", c.session.verify_queue_depth},
          {"per_chunk_retrieval", c.session.per_chunk_retrieval}}},
        {"memory_enabled", c.session.memory_enabled},
        {"lexicon", c.session.lexicon},
    };
}

}  // namespace idstream
