// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "httplib.h"

namespace idstream {

namespace {

void log_warn(const std::string& msg) { std::cerr << "[idstream] warn: " << msg << "\n"; }

// Instruction blocks sent as the "prompt" field of the envelope. These are
// the exact runtime messages; a real model server can be attached unmodified.

constexpr const char* kExtractInstruction =
    R"(Extract human characters from the video prompt.

RULES:
1. "entities": ONLY human/person characters (man, woman,
   protagonist, etc.)
   - Extract ONLY visual/physical attributes: hair, clothing,
     accessories, body type, age, skin, facial features
   - DO NOT extract behavioral states (walking, nodding, reading,
     sitting) or emotions (quiet, contemplative, happy)
   - Keep entity names short
OUTPUT FORMAT (JSON object only, no explanation):
{"entities": [{"entity": "<name>", "attrs": ["<attr1>", "<attr2>"]}]}

If no humans found, entities should be [].)";

constexpr const char* kMatchInstruction =
    R"(Match a new character to existing characters.

TASK: Given a new character description and existing character registry,
determine if they refer to the same person.

MATCHING RULES:
1. Words like "protagonist", "main character", "he", "she" usually
   refer to previously introduced characters
2. Matching clothing or appearance attributes indicates the same person
3. Words like "another", "other", "new", "different" indicate a NEW
   person - return null

OUTPUT FORMAT (JSON only, no explanation):
{"matched_id": <number or null>})";

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Finds a balanced JSON object/array starting at the first `open` character.
std::string balanced_slice(const std::string& text, char open, char close) {
    std::size_t start = text.find(open);
    if (start == std::string::npos) return "";
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        char c = text[i];
        if (escape) {
            escape = false;
            continue;
        }
        if (c == '\\') {
            escape = true;
            continue;
        }
        if (c == '"') in_string = !in_string;
        if (in_string) continue;
        if (c == open) ++depth;
        if (c == close && --depth == 0) return text.substr(start, i - start + 1);
    }
    return "";
}

std::optional<nlohmann::json> try_parse(const std::string& s) {
    if (s.empty()) return std::nullopt;
    nlohmann::json j = nlohmann::json::parse(s, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

std::string role_name(OracleRole role) {
    switch (role) {
        case OracleRole::extract: return "extract";
        case OracleRole::match: return "match";
        case OracleRole::verify: return "verify";
    }
    return "unknown";
}

nlohmann::json OracleRequest::to_json() const {
    nlohmann::json j = {{"role", role_name(role)},
                        {"prompt", prompt},
                        {"temperature", temperature},
                        {"deadline_seconds", deadline_seconds}};
    if (!images.empty()) j["images"] = images;
    return j;
}

OracleRequest OracleRequest::from_json(const nlohmann::json& j) {
    OracleRequest r;
    std::string role = j.at("role").get<std::string>();
    if (role == "extract") {
        r.role = OracleRole::extract;
    } else if (role == "match") {
        r.role = OracleRole::match;
    } else if (role == "verify") {
        r.role = OracleRole::verify;
    } else {
        throw std::invalid_argument("unknown oracle role: " + role);
    }
    r.prompt = j.at("prompt").get<std::string>();
    if (j.contains("images")) r.images = j.at("images").get<std::vector<std::string>>();
    if (j.contains("temperature")) r.temperature = j.at("temperature").get<double>();
    if (j.contains("deadline_seconds")) r.deadline_seconds = j.at("deadline_seconds").get<double>();
    return r;
}

OracleRequest build_extract_request(const std::string& prompt_text, double deadline_seconds) {
    OracleRequest r;
    r.role = OracleRole::extract;
    r.prompt = std::string(kExtractInstruction) + "\n\n" + prompt_text;
    r.deadline_seconds = deadline_seconds;
    return r;
}

OracleRequest build_match_request(const EntityDescriptor& descriptor,
                                  const GlobalRegistry& registry, double deadline_seconds) {
    std::ostringstream user;
    user << "New character description:\n\"" << descriptor.name;
    if (!descriptor.attributes.empty()) user << ": " << join(descriptor.attributes, ", ");
    user << "\"\n\nExisting characters:\n";
    for (const auto& [id, entry] : registry.entries()) {
        user << "ID " << id << ": " << join(entry.aliases, "/");
        if (!entry.attributes.empty()) user << ": " << join(entry.attributes, ", ");
        user << "\n";
    }
    user << "\nDoes the new character match any existing one? If yes, return the ID.\n"
            "If no, return null.\n"
            "Output JSON only: {\"matched_id\": <number or null>}";

    OracleRequest r;
    r.role = OracleRole::match;
    r.prompt = std::string(kMatchInstruction) + "\n\n" + user.str();
    r.deadline_seconds = deadline_seconds;
    return r;
}

OracleRequest build_verify_request(const std::string& prompt_text,
                                   const std::vector<std::string>& entity_names,
                                   const AttributeSnapshot& attributes, bool first_chunk,
                                   int num_frames, std::vector<std::string> images,
                                   double deadline_seconds) {
    std::ostringstream p;
    p << "You are evaluating video frames for visual quality.\n"
      << "The video prompt is: \"" << prompt_text << "\"\n"
      << "Key entities: " << join(entity_names, ", ") << "\n\n"
      << "Rate each of the " << num_frames << " frames from 0.0 to 1.0 on how well they\n"
      << "visually represent the entities and match the prompt description.\n"
      << "Consider clarity, consistency, and visual quality.\n";
    if (first_chunk && !attributes.empty()) {
        p << "\nAlso verify these entity attributes against the frames:\n";
        for (const auto& [id, named] : attributes) {
            p << "  ID " << id << " (" << named.first << "): " << join(named.second, ", ")
              << "\n";
        }
        p << "If any attribute is incorrect based on what you see, provide corrections.\n";
    }
    p << "\nRespond ONLY with valid JSON:\n"
      << "{\"scores\": [<float>, ...], \"corrections\": null}\n";
    if (first_chunk) {
        p << "If there are attribute corrections, use:\n"
          << "{\"scores\": [<float>, ...],\n"
          << " \"corrections\": {\"<global_id>\": {\"corrected_attrs\": [\"attr1\", \"attr2\"]}}}";
    }

    OracleRequest r;
    r.role = OracleRole::verify;
    r.prompt = p.str();
    r.images = std::move(images);
    r.deadline_seconds = deadline_seconds;
    return r;
}

std::optional<nlohmann::json> extract_json_value(const std::string& raw_text) {
    // Fenced code blocks first.
    static const std::regex fence(R"(```(?:json)?\s*([\s\S]*?)\s*```)");
    for (auto it = std::sregex_iterator(raw_text.begin(), raw_text.end(), fence);
         it != std::sregex_iterator(); ++it) {
        if (auto j = try_parse((*it)[1].str())) return j;
    }
    if (auto j = try_parse(raw_text)) return j;
    if (auto j = try_parse(balanced_slice(raw_text, '{', '}'))) return j;
    if (auto j = try_parse(balanced_slice(raw_text, '[', ']'))) return j;
    return std::nullopt;
}

namespace {

std::optional<EntityDescriptor> descriptor_from_json(const nlohmann::json& e) {
    if (e.is_string()) {
        std::string name = e.get<std::string>();
        if (name.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
        return make_descriptor(name, {});
    }
    if (!e.is_object() || !e.contains("entity") || !e["entity"].is_string()) return std::nullopt;
    std::string name = e["entity"].get<std::string>();
    if (name.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
    std::vector<std::string> attrs;
    if (e.contains("attrs") && e["attrs"].is_array()) {
        for (const auto& a : e["attrs"]) {
            if (a.is_string()) attrs.push_back(a.get<std::string>());
        }
    }
    return make_descriptor(name, attrs);
}

std::vector<EntityDescriptor> descriptors_from_array(const nlohmann::json& arr) {
    std::vector<EntityDescriptor> out;
    for (const auto& e : arr) {
        if (auto d = descriptor_from_json(e)) out.push_back(std::move(*d));
    }
    return out;
}

}  // namespace

ParsedExtraction parse_extract_response(const std::string& raw_text) {
    ParsedExtraction result;
    auto interpret = [&](const nlohmann::json& j, bool allow_array) -> bool {
        if (j.is_object() && j.contains("entities") && j["entities"].is_array()) {
            result.entities = descriptors_from_array(j["entities"]);
            result.structured = true;
            return true;
        }
        if (allow_array && j.is_array()) {  // legacy list-only format
            result.entities = descriptors_from_array(j);
            result.structured = true;
            return true;
        }
        return false;
    };
    // The legacy array form is accepted only when the response (or a fenced
    // block) IS the array; an embedded array fragment is not an entity list.
    static const std::regex fence(R"(```(?:json)?\s*([\s\S]*?)\s*```)");
    for (auto it = std::sregex_iterator(raw_text.begin(), raw_text.end(), fence);
         it != std::sregex_iterator(); ++it) {
        if (auto j = try_parse((*it)[1].str()); j && interpret(*j, true)) return result;
    }
    if (auto j = try_parse(raw_text); j && interpret(*j, true)) return result;
    if (auto j = try_parse(balanced_slice(raw_text, '{', '}')); j && interpret(*j, false)) {
        return result;
    }
    // Last resort: regex field extraction.
    static const std::regex entity_re(R"re("entity"\s*:\s*"([^"]+)")re");
    static const std::regex attrs_re(R"re("attrs"\s*:\s*\[([^\]]*)\])re");
    static const std::regex str_re(R"re("([^"]*)")re");
    auto it = std::sregex_iterator(raw_text.begin(), raw_text.end(), entity_re);
    for (; it != std::sregex_iterator(); ++it) {
        std::string name = (*it)[1].str();
        std::vector<std::string> attrs;
        std::smatch am;
        std::string rest = raw_text.substr(
            static_cast<std::size_t>(it->position() + it->length()));
        if (std::regex_search(rest, am, attrs_re)) {
            std::string inner = am[1].str();
            for (auto sit = std::sregex_iterator(inner.begin(), inner.end(), str_re);
                 sit != std::sregex_iterator(); ++sit) {
                attrs.push_back((*sit)[1].str());
            }
        }
        result.entities.push_back(make_descriptor(name, attrs));
        result.structured = true;
    }
    return result;
}

ParsedMatch parse_match_response(const std::string& raw_text) {
    ParsedMatch m;
    auto j = extract_json_value(raw_text);
    if (!j || !j->is_object() || !j->contains("matched_id")) return m;
    const auto& v = (*j)["matched_id"];
    if (v.is_number_integer()) m.matched_id = v.get<int>();
    return m;  // null / float / string are all conservative non-matches
}

ParsedVerify parse_verify_response(const std::string& raw_text) {
    ParsedVerify r;
    auto j = extract_json_value(raw_text);
    if (!j || !j->is_object()) return r;
    if (j->contains("scores") && (*j)["scores"].is_array()) {
        r.structured = true;
        std::size_t n = 0;
        for (const auto& s : (*j)["scores"]) {
            if (n >= r.scores.size()) break;
            if (s.is_number()) r.scores[n++] = clip01(s.get<double>());
        }
        // missing entries keep the neutral 0.5 padding
    }
    if (j->contains("corrections") && (*j)["corrections"].is_object()) {
        for (const auto& [key, v] : (*j)["corrections"].items()) {
            char* end = nullptr;
            long id = std::strtol(key.c_str(), &end, 10);
            if (end == key.c_str() || *end != '\0') continue;
            if (!v.is_object() || !v.contains("corrected_attrs") ||
                !v["corrected_attrs"].is_array()) {
                continue;
            }
            std::vector<std::string> attrs;
            for (const auto& a : v["corrected_attrs"]) {
                if (a.is_string()) attrs.push_back(a.get<std::string>());
            }
            r.corrections[static_cast<int>(id)] = std::move(attrs);
        }
    }
    return r;
}

nlohmann::json parse_oracle_json(const std::string& raw_text, OracleRole role) {
    switch (role) {
        case OracleRole::extract: {
            ParsedExtraction p = parse_extract_response(raw_text);
            nlohmann::json entities = nlohmann::json::array();
            for (const auto& d : p.entities) {
                entities.push_back({{"entity", d.name}, {"attrs", d.attributes}});
            }
            return {{"entities", entities}};
        }
        case OracleRole::match: {
            ParsedMatch p = parse_match_response(raw_text);
            if (p.matched_id) return {{"matched_id", *p.matched_id}};
            return {{"matched_id", nullptr}};
        }
        case OracleRole::verify: {
            ParsedVerify p = parse_verify_response(raw_text);
            nlohmann::json corrections = nlohmann::json::object();
            for (const auto& [id, attrs] : p.corrections) {
                corrections[std::to_string(id)] = {{"corrected_attrs", attrs}};
            }
            return {{"scores", p.scores},
                    {"corrections", p.corrections.empty() ? nlohmann::json() : corrections}};
        }
    }
    return nlohmann::json();
}

MockOracle MockOracle::from_json(const nlohmann::json& script) {
    std::vector<MockRule> rules;
    for (const auto& item : script) {
        MockRule r;
        if (item.contains("role")) {
            std::string role = item.at("role").get<std::string>();
            if (role == "extract") r.role = OracleRole::extract;
            else if (role == "match") r.role = OracleRole::match;
            else if (role == "verify") r.role = OracleRole::verify;
            else throw std::invalid_argument("mock script: unknown role " + role);
        }
        if (item.contains("contains")) r.contains = item.at("contains").get<std::string>();
        const auto& resp = item.at("response");
        r.response = resp.is_string() ? resp.get<std::string>() : resp.dump();
        rules.push_back(std::move(r));
    }
    return MockOracle(std::move(rules));
}

MockOracle MockOracle::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mock script: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

OracleResponse MockOracle::call(const OracleRequest& request) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& rule : rules_) {
        if (rule.role && *rule.role != request.role) continue;
        if (!rule.contains.empty() && request.prompt.find(rule.contains) == std::string::npos) {
            continue;
        }
        return {true, rule.response};
    }
    ++unmatched_;
    log_warn("mock oracle: no rule matched a " + role_name(request.role) + " request");
    return {false, ""};
}

HttpOracle::HttpOracle(std::string endpoint) : endpoint_(std::move(endpoint)) {}

OracleResponse HttpOracle::call(const OracleRequest& request) {
    if (request.deadline_seconds <= 0.0) return {false, ""};
    httplib::Client client(endpoint_);
    auto deadline_ms = static_cast<int>(request.deadline_seconds * 1000.0);
    client.set_connection_timeout(0, deadline_ms * 1000);
    client.set_read_timeout(0, deadline_ms * 1000);
    client.set_write_timeout(0, deadline_ms * 1000);
    auto res = client.Post("/oracle", request.to_json().dump(), "application/json");
    if (!res || res->status != 200) {
        log_warn("oracle endpoint " + endpoint_ + " failed for " + role_name(request.role));
        return {false, ""};
    }
    return {true, res->body};
}

struct MockServer::Impl {
    MockOracle oracle;
    httplib::Server server;
    std::thread thread;

    explicit Impl(MockOracle o) : oracle(std::move(o)) {}
};

MockServer::MockServer(MockOracle oracle, int port)
    : impl_(std::make_unique<Impl>(std::move(oracle))), port_(port) {
    impl_->server.Post("/oracle", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            OracleRequest oreq = OracleRequest::from_json(nlohmann::json::parse(req.body));
            OracleResponse oresp = impl_->oracle.call(oreq);
            if (oresp.ok) {
                res.set_content(oresp.body, "application/json");
            } else {
                res.status = 404;
            }
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
        }
    });
    if (port_ == 0) {
        port_ = impl_->server.bind_to_any_port("127.0.0.1");
    } else if (!impl_->server.bind_to_port("127.0.0.1", port_)) {
        throw std::runtime_error("mock server: cannot bind port " + std::to_string(port_));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

MockServer::~MockServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace idstream
