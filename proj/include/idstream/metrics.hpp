// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "json.hpp"

#include "idstream/bundle.hpp"

namespace idstream {
namespace metrics {

struct MetricParams {
    double alpha_cons = 0.34;    // SC/BC local-vs-cross weight
    int k_tf = 8;                // sampled frames per segment for TF
    double rho_pair = 90.0;      // percentile over valid residuals
    double rho_seg = 84.0;       // percentile over pair errors
    double tau_tf = 0.5;
    double eps_fb = 1.0;         // forward-backward consistency threshold, pixels
    double tau_ms = 3.0;
    double vtss_low = 0.02;
    double vtss_high = 0.075;
    double eps_bs = 0.02;
    double lambda_bs = 0.5;
    double delta_cac = 0.79;
    double kappa_cac = 2.0;
    double delta_clc = 0.58;
    double kappa_clc = 1.5;
    double lambda_clc = 0.7;     // planner-weighted component of target weights
    double nu_eg = 0.5;          // segment score with no entities
    double mu_dt = 0.25;
    double tau_gate = 0.05;
    double tau_on = 0.02;
    double tau_off = 0.06;
    double alpha_vlm = 0.8;
};

/// Linear interpolation between closest ranks, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Bilinear sample of a (H, W) image at a fractional position; out-of-range
/// neighbors are clamped (they only ever carry zero weight for in-bounds
/// positions).
double bilinear_sample(const NdArray& image, double x, double y);

/// Backward-warp of the next frame by the forward flow plus the validity
/// mask (in-bounds and forward-backward consistency within eps_fb).
struct WarpResult {
    NdArray warped;            // (H, W)
    std::vector<bool> in_bounds;
    std::vector<bool> valid;   // in-bounds and flow-consistent
};
WarpResult warp_backward(const NdArray& next_frame, const NdArray& flow_fwd,
                         const NdArray& flow_bwd, double eps_fb);

/// Normalized planner weights u_i / sum(u); malformed or absent input falls
/// back to uniform.
struct PlannerWeights {
    std::vector<double> w;
    bool fallback = false;
};
PlannerWeights planner_weights(const std::vector<int>& u, int segment_count);

/// Segment aggregation sum(w_i * x_i).
double agg_seg(const std::vector<double>& x, const std::vector<double>& w);

/// Transition aggregation over the valid set: weighted by (w_i + w_{i+1}).
double agg_tr(const std::vector<double>& x, const std::vector<int>& omega,
              const std::vector<double>& w);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Index of the sample maximizing summed similarity to the others;
/// ties go to the lowest index.
std::size_t medoid_index(const std::vector<std::vector<double>>& samples);

struct ConsistencyDiag {
    std::vector<double> local;   // per-segment 25th-percentile pair similarity
    double c_adj = 0.0;
    double c_anchor = 0.0;
    std::vector<std::size_t> medoids;
};

/// Subject/background consistency: alpha * A_seg(local) + (1-alpha) *
/// (c_adj + c_anchor) / 2 over segment feature sets (5 unit vectors each).
double consistency_score(const std::vector<std::vector<std::vector<double>>>& features,
                         const std::vector<double>& w, const MetricParams& params,
                         ConsistencyDiag* diag = nullptr);

double temporal_flicker(const std::vector<TfSegment>& tf, const std::vector<double>& w,
                        const MetricParams& params, std::vector<double>* seg_errors = nullptr);

double motion_smoothness(const std::vector<MsSegment>& ms, const std::vector<double>& w,
                         const MetricParams& params, std::vector<double>* seg_errors = nullptr);

double vtss(const std::vector<double>& raw, const std::vector<double>& w,
            const MetricParams& params);

double boundary_smoothness(const std::vector<BsTriple>& triples, const std::vector<double>& w,
                           const MetricParams& params);

/// Absent (nullopt) when no transition is kept.
std::optional<double> cac(const std::vector<bool>& keep,
                          const std::vector<double>& adjacent_medoid_cos,
                          const std::vector<double>& w, const MetricParams& params,
                          std::vector<int>* omega = nullptr);

struct ClcGroup {
    std::vector<int> occurrences;       // 0-indexed segments, first is the anchor
    std::vector<double> similarities;   // one per non-anchor occurrence
};

/// Absent (nullopt) when no entity has a valid reappearance group.
std::optional<double> clc(const std::map<std::string, ClcGroup>& groups,
                          const std::vector<double>& w, const MetricParams& params);

double eg(const std::vector<std::vector<std::pair<double, double>>>& per_segment,
          const std::vector<double>& w, const MetricParams& params);

double dt(const std::vector<std::pair<double, double>>& pairs, const std::vector<double>& w,
          const MetricParams& params);

double vlm_align(const std::vector<int>& segment_scores, int overall,
                 const std::vector<double>& w, const MetricParams& params);

struct MetricReport {
    double sc = 0.0;
    double bc = 0.0;
    double tf = 0.0;
    double ms = 0.0;
    double vtss = 0.0;
    double bs = 0.0;
    std::optional<double> cac;
    std::optional<double> clc;
    double eg = 0.0;
    double dt = 0.0;
    double vlm = 0.0;

    double quality = 0.0;
    double temporal = 0.0;
    double instruction = 0.0;
    double overall = 0.0;

    nlohmann::json diagnostics;
};

/// Group means (absent CAC/CLC excluded) and the macro-average overall.
void group_and_overall(MetricReport& report);

/// Scores one measurement bundle end to end.
MetricReport score_bundle(const MeasurementBundle& bundle,
                          const MetricParams& params = MetricParams{});

nlohmann::json report_to_json(const MetricReport& report);

}  // namespace metrics
}  // namespace idstream
