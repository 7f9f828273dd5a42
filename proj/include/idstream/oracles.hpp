// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "idstream/registry.hpp"

namespace idstream {

enum class OracleRole { extract, match, verify };

std::string role_name(OracleRole role);

/// One request in the JSON-over-HTTP envelope: {role, prompt, images?}.
/// The prompt field carries the full instruction + user payload so a real
/// model server can be attached unmodified. Temperature is metadata only
/// (deterministic decoding is the server's concern).
struct OracleRequest {
    OracleRole role = OracleRole::extract;
    std::string prompt;
    std::vector<std::string> images;  // base64 PNG, optional
    double deadline_seconds = 10.0;
    double temperature = 0.0;

    nlohmann::json to_json() const;
    static OracleRequest from_json(const nlohmann::json& j);
};

struct OracleResponse {
    bool ok = false;       // transport-level success
    std::string body;      // raw model text
};

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual OracleResponse call(const OracleRequest& request) = 0;
};

// ---- request builders (wire formats) ----

OracleRequest build_extract_request(const std::string& prompt_text, double deadline_seconds);

OracleRequest build_match_request(const EntityDescriptor& descriptor,
                                  const GlobalRegistry& registry, double deadline_seconds);

/// Attribute snapshot handed to the verification worker: id -> (name, attrs).
using AttributeSnapshot = std::map<int, std::pair<std::string, std::vector<std::string>>>;

OracleRequest build_verify_request(const std::string& prompt_text,
                                   const std::vector<std::string>& entity_names,
                                   const AttributeSnapshot& attributes, bool first_chunk,
                                   int num_frames, std::vector<std::string> images,
                                   double deadline_seconds);

// ---- response parsing ----

/// Extracts the outermost JSON value from model text, stripping code fences
/// and surrounding prose. Returns nullopt when nothing parseable is found.
std::optional<nlohmann::json> extract_json_value(const std::string& raw_text);

struct ParsedExtraction {
    std::vector<EntityDescriptor> entities;
    bool structured = false;  // false when no JSON structure was recognized
};

/// Accepts the {"entities":[...]} schema, the legacy list-only format, and
/// finally regex field extraction. Malformed entries are dropped.
ParsedExtraction parse_extract_response(const std::string& raw_text);

struct ParsedMatch {
    std::optional<int> matched_id;  // nullopt on null, absent, or malformed
};

ParsedMatch parse_match_response(const std::string& raw_text);

struct ParsedVerify {
    std::array<double, 3> scores{0.5, 0.5, 0.5};  // clipped to [0,1], padded with 0.5
    std::map<int, std::vector<std::string>> corrections;
    bool structured = false;
};

ParsedVerify parse_verify_response(const std::string& raw_text);

/// Role-dispatching parse with the role-specific neutral fallback, returned
/// as a normalized JSON payload.
nlohmann::json parse_oracle_json(const std::string& raw_text, OracleRole role);

// ---- oracle implementations ----

/// Scripted oracle: first rule whose role matches and whose needle occurs in
/// the request prompt wins. Unmatched requests yield the neutral result and
/// a warning. Matching is serialized, so clients may share one instance.
struct MockRule {
    std::optional<OracleRole> role;
    std::string contains;      // substring of the request prompt; empty matches all
    std::string response;      // raw response body
};

class MockOracle : public Oracle {
public:
    MockOracle() = default;
    explicit MockOracle(std::vector<MockRule> rules) : rules_(std::move(rules)) {}
    MockOracle(MockOracle&& other) noexcept
        : rules_(std::move(other.rules_)), unmatched_(other.unmatched_) {}
    MockOracle& operator=(MockOracle&& other) noexcept {
        rules_ = std::move(other.rules_);
        unmatched_ = other.unmatched_;
        return *this;
    }

    static MockOracle from_json(const nlohmann::json& script);
    static MockOracle from_file(const std::string& path);

    OracleResponse call(const OracleRequest& request) override;

    int unmatched_count() const { return unmatched_; }

private:
    std::vector<MockRule> rules_;
    std::mutex mutex_;
    int unmatched_ = 0;
};

/// HTTP client speaking POST /oracle with the JSON envelope. Timeouts and
/// transport failures degrade to a failed response (neutral downstream).
class HttpOracle : public Oracle {
public:
    explicit HttpOracle(std::string endpoint);  // e.g. "http://127.0.0.1:8123"
    OracleResponse call(const OracleRequest& request) override;

private:
    std::string endpoint_;
};

/// Oracle that always fails, forcing the neutral path everywhere.
class NeutralOracle : public Oracle {
public:
    OracleResponse call(const OracleRequest&) override { return {false, ""}; }
};

/// Runs the scripted mock behind POST /oracle until the returned handle is
/// destroyed. Binds to 127.0.0.1.
class MockServer {
public:
    MockServer(MockOracle oracle, int port);
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_;
};

}  // namespace idstream
