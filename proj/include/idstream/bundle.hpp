// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "idstream/ndarray.hpp"

namespace idstream {

/// Raised on malformed bundle input; names the first offending field.
class BundleError : public std::runtime_error {
public:
    BundleError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct TfSegment {
    std::vector<NdArray> frames;     // K luminance images (H, W), values 0..255
    std::vector<NdArray> flow_fwd;   // K-1 fields (H, W, 2)
    std::vector<NdArray> flow_bwd;   // K-1 fields (H, W, 2)
};

struct MsSegment {
    std::optional<double> error;     // precomputed raw interpolation error
    std::vector<NdArray> originals;  // otherwise: matched original frames
    std::vector<NdArray> midpoints;  // and interpolated midpoints
};

struct BsTriple {
    double before = 0.0;   // mean flow magnitude before the boundary
    double across = 0.0;
    double after = 0.0;
};

/// Per-sample container of precomputed features, flows, and judge outputs.
struct MeasurementBundle {
    int segment_count = 6;
    std::vector<int> planner_raw;                       // empty = absent
    std::vector<std::vector<std::vector<double>>> subject_features;     // T x 5 x dim
    std::vector<std::vector<std::vector<double>>> background_features;  // T x 5 x dim
    std::vector<TfSegment> tf;                          // length T
    std::vector<MsSegment> ms;                          // length T
    std::vector<double> vtss_raw;                       // length T
    std::vector<BsTriple> bs;                           // length T-1
    std::vector<bool> cac_keep;                         // length T-1
    std::map<std::string, std::vector<int>> clc_groups; // 0-indexed occurrence segments
    std::vector<std::vector<std::pair<double, double>>> eg;  // per segment (presence, match)
    std::vector<std::pair<double, double>> dt;          // length T-1, (d_p, d_v)
    std::vector<int> vlm_segment_scores;                // length T, 1..100
    int vlm_overall = 0;                                // 1..100
};

/// Parses and validates a bundle document; sidecar references resolve
/// relative to base_dir. Throws BundleError naming the first bad field.
MeasurementBundle parse_bundle(const nlohmann::json& j, const std::filesystem::path& base_dir);

MeasurementBundle load_bundle(const std::filesystem::path& path);

}  // namespace idstream
