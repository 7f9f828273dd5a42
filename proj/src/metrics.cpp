// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace idstream {
namespace metrics {

namespace {

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (p < 0.0 || p > 100.0) throw std::invalid_argument("percentile: p out of range");
    std::sort(values.begin(), values.end());
    const double pos = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double bilinear_sample(const NdArray& image, double x, double y) {
    const std::size_t H = image.dims[0];
    const std::size_t W = image.dims[1];
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double dx = x - fx;
    const double dy = y - fy;
    auto clampi = [](long v, std::size_t n) {
        return static_cast<std::size_t>(std::min<long>(std::max<long>(v, 0),
                                                       static_cast<long>(n) - 1));
    };
    const std::size_t x0 = clampi(static_cast<long>(fx), W);
    const std::size_t x1 = clampi(static_cast<long>(fx) + 1, W);
    const std::size_t y0 = clampi(static_cast<long>(fy), H);
    const std::size_t y1 = clampi(static_cast<long>(fy) + 1, H);
    return (1.0 - dy) * ((1.0 - dx) * image.at2(y0, x0) + dx * image.at2(y0, x1)) +
           dy * ((1.0 - dx) * image.at2(y1, x0) + dx * image.at2(y1, x1));
}

WarpResult warp_backward(const NdArray& next_frame, const NdArray& flow_fwd,
                         const NdArray& flow_bwd, double eps_fb) {
    if (next_frame.rank() != 2 || flow_fwd.rank() != 3 || flow_bwd.rank() != 3) {
        throw std::invalid_argument("warp_backward: bad ranks");
    }
    const std::size_t H = next_frame.dims[0];
    const std::size_t W = next_frame.dims[1];
    if (flow_fwd.dims[0] != H || flow_fwd.dims[1] != W || flow_fwd.dims[2] != 2 ||
        flow_bwd.dims[0] != H || flow_bwd.dims[1] != W || flow_bwd.dims[2] != 2) {
        throw std::invalid_argument("warp_backward: flow shape mismatch");
    }
    WarpResult out;
    out.warped.dims = {H, W};
    out.warped.data.assign(H * W, 0.0);
    out.in_bounds.assign(H * W, false);
    out.valid.assign(H * W, false);
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            const double ux = flow_fwd.at3(i, j, 0);
            const double uy = flow_fwd.at3(i, j, 1);
            const double sx = static_cast<double>(j) + ux;
            const double sy = static_cast<double>(i) + uy;
            const bool inb = sx >= 0.0 && sx <= static_cast<double>(W - 1) && sy >= 0.0 &&
                             sy <= static_cast<double>(H - 1);
            out.warped.data[i * W + j] = bilinear_sample(next_frame, sx, sy);
            out.in_bounds[i * W + j] = inb;
            if (inb) {
                // Sample the backward flow at the warped position; a
                // consistent round trip should cancel the forward flow.
                double sampled_bx = 0.0, sampled_by = 0.0;
                {
                    const double fx = std::floor(sx);
                    const double fy = std::floor(sy);
                    const double dx = sx - fx;
                    const double dy = sy - fy;
                    auto clampi = [](long v, std::size_t n) {
                        return static_cast<std::size_t>(
                            std::min<long>(std::max<long>(v, 0), static_cast<long>(n) - 1));
                    };
                    const std::size_t x0 = clampi(static_cast<long>(fx), W);
                    const std::size_t x1 = clampi(static_cast<long>(fx) + 1, W);
                    const std::size_t y0 = clampi(static_cast<long>(fy), H);
                    const std::size_t y1 = clampi(static_cast<long>(fy) + 1, H);
                    for (int c = 0; c < 2; ++c) {
                        double v = (1.0 - dy) * ((1.0 - dx) * flow_bwd.at3(y0, x0, c) +
                                                 dx * flow_bwd.at3(y0, x1, c)) +
                                   dy * ((1.0 - dx) * flow_bwd.at3(y1, x0, c) +
                                         dx * flow_bwd.at3(y1, x1, c));
                        if (c == 0) sampled_bx = v;
                        else sampled_by = v;
                    }
                }
                const double rx = ux + sampled_bx;
                const double ry = uy + sampled_by;
                out.valid[i * W + j] = std::sqrt(rx * rx + ry * ry) <= eps_fb;
            }
        }
    }
    return out;
}

PlannerWeights planner_weights(const std::vector<int>& u, int segment_count) {
    PlannerWeights out;
    bool usable = static_cast<int>(u.size()) == segment_count;
    for (int v : u) {
        if (v < 1 || v > 100) usable = false;
    }
    if (u.empty() || !usable) {
        out.fallback = true;
        out.w.assign(segment_count, 1.0 / segment_count);
        return out;
    }
    double sum = 0.0;
    for (int v : u) sum += v;
    for (int v : u) out.w.push_back(static_cast<double>(v) / sum);
    return out;
}

double agg_seg(const std::vector<double>& x, const std::vector<double>& w) {
    if (x.size() != w.size()) throw std::invalid_argument("agg_seg: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
    return s;
}

double agg_tr(const std::vector<double>& x, const std::vector<int>& omega,
              const std::vector<double>& w) {
    if (omega.empty()) throw std::invalid_argument("agg_tr: empty transition set");
    double num = 0.0;
    double den = 0.0;
    for (int i : omega) {
        if (i < 0 || static_cast<std::size_t>(i) >= x.size() ||
            static_cast<std::size_t>(i) + 1 >= w.size()) {
            throw std::invalid_argument("agg_tr: transition index out of range");
        }
        const double wi = w[static_cast<std::size_t>(i)] + w[static_cast<std::size_t>(i) + 1];
        num += wi * x[static_cast<std::size_t>(i)];
        den += wi;
    }
    return num / den;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw std::invalid_argument("cosine: size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::size_t medoid_index(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) throw std::invalid_argument("medoid_index: empty set");
    std::size_t best = 0;
    double best_sum = -1e300;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < samples.size(); ++j) {
            if (i != j) s += cosine(samples[i], samples[j]);
        }
        if (s > best_sum) {
            best_sum = s;
            best = i;
        }
    }
    return best;
}

double consistency_score(const std::vector<std::vector<std::vector<double>>>& features,
                         const std::vector<double>& w, const MetricParams& params,
                         ConsistencyDiag* diag) {
    const std::size_t T = features.size();
    if (T < 2) throw std::invalid_argument("consistency_score: need at least two segments");

    std::vector<double> local(T);
    std::vector<std::size_t> medoids(T);
    for (std::size_t i = 0; i < T; ++i) {
        const auto& seg = features[i];
        if (seg.size() < 2) throw std::invalid_argument("consistency_score: need >= 2 samples");
        std::vector<double> pair_cos;
        for (std::size_t a = 0; a < seg.size(); ++a) {
            for (std::size_t b = a + 1; b < seg.size(); ++b) {
                pair_cos.push_back(cosine(seg[a], seg[b]));
            }
        }
        local[i] = percentile(pair_cos, 25.0);
        medoids[i] = medoid_index(seg);
    }

    std::vector<double> adj;
    for (std::size_t i = 0; i + 1 < T; ++i) {
        adj.push_back(cosine(features[i][medoids[i]], features[i + 1][medoids[i + 1]]));
    }
    std::vector<double> anchor;
    for (std::size_t i = 1; i < T; ++i) {
        anchor.push_back(cosine(features[0][medoids[0]], features[i][medoids[i]]));
    }
    const double c_adj = percentile(adj, 25.0);
    const double c_anchor = percentile(anchor, 25.0);

    if (diag) {
        diag->local = local;
        diag->c_adj = c_adj;
        diag->c_anchor = c_anchor;
        diag->medoids = medoids;
    }
    return params.alpha_cons * agg_seg(local, w) +
           (1.0 - params.alpha_cons) * (c_adj + c_anchor) / 2.0;
}

double temporal_flicker(const std::vector<TfSegment>& tf, const std::vector<double>& w,
                        const MetricParams& params, std::vector<double>* seg_errors) {
    std::vector<double> scores;
    std::vector<double> errors;
    for (const auto& seg : tf) {
        if (seg.frames.size() < 2) throw std::invalid_argument("tf: need >= 2 frames");
        if (seg.flow_fwd.size() != seg.frames.size() - 1 ||
            seg.flow_bwd.size() != seg.frames.size() - 1) {
            throw std::invalid_argument("tf: flow count mismatch");
        }
        std::vector<double> pair_errors;
        for (std::size_t t = 0; t + 1 < seg.frames.size(); ++t) {
            WarpResult wr = warp_backward(seg.frames[t + 1], seg.flow_fwd[t], seg.flow_bwd[t],
                                          params.eps_fb);
            const NdArray& cur = seg.frames[t];
            if (cur.dims != wr.warped.dims) throw std::invalid_argument("tf: frame shapes differ");
            const std::size_t total = cur.size();
            std::size_t valid_count = 0;
            for (bool b : wr.valid) valid_count += b ? 1 : 0;
            const std::vector<bool>* mask = &wr.valid;
            if (static_cast<double>(valid_count) < 0.05 * static_cast<double>(total)) {
                mask = &wr.in_bounds;
            }
            std::vector<double> residuals;
            for (std::size_t u = 0; u < total; ++u) {
                if ((*mask)[u]) {
                    residuals.push_back(std::abs(cur.data[u] - wr.warped.data[u]) / 255.0);
                }
            }
            if (residuals.empty()) {
                for (std::size_t u = 0; u < total; ++u) {
                    residuals.push_back(std::abs(cur.data[u] - wr.warped.data[u]) / 255.0);
                }
            }
            pair_errors.push_back(percentile(residuals, params.rho_pair));
        }
        const double e = percentile(pair_errors, params.rho_seg);
        errors.push_back(e);
        scores.push_back(std::exp(-e / params.tau_tf));
    }
    if (seg_errors) *seg_errors = errors;
    return agg_seg(scores, w);
}

double motion_smoothness(const std::vector<MsSegment>& ms, const std::vector<double>& w,
                         const MetricParams& params, std::vector<double>* seg_errors) {
    std::vector<double> scores;
    std::vector<double> errors;
    for (const auto& seg : ms) {
        double e = 0.0;
        if (seg.error) {
            e = *seg.error;
        } else {
            if (seg.originals.empty() || seg.originals.size() != seg.midpoints.size()) {
                throw std::invalid_argument("ms: original/midpoint count mismatch");
            }
            double acc = 0.0;
            for (std::size_t k = 0; k < seg.originals.size(); ++k) {
                const NdArray& a = seg.originals[k];
                const NdArray& b = seg.midpoints[k];
                if (a.dims != b.dims) throw std::invalid_argument("ms: frame shapes differ");
                double diff = 0.0;
                for (std::size_t u = 0; u < a.size(); ++u) diff += std::abs(a.data[u] - b.data[u]);
                acc += diff / static_cast<double>(a.size());
            }
            e = acc / static_cast<double>(seg.originals.size());
        }
        errors.push_back(e);
        scores.push_back(std::exp(-e / params.tau_ms));
    }
    if (seg_errors) *seg_errors = errors;
    return agg_seg(scores, w);
}

double vtss(const std::vector<double>& raw, const std::vector<double>& w,
            const MetricParams& params) {
    const double r = agg_seg(raw, w);
    return clip01((r - params.vtss_low) / (params.vtss_high - params.vtss_low));
}

double boundary_smoothness(const std::vector<BsTriple>& triples, const std::vector<double>& w,
                           const MetricParams& params) {
    std::vector<double> s;
    std::vector<int> omega;
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const double expected = (triples[i].before + triples[i].after) / 2.0;
        s.push_back(std::exp(-std::abs(triples[i].across - expected) /
                             (params.eps_bs + params.lambda_bs * expected)));
        omega.push_back(static_cast<int>(i));
    }
    return agg_tr(s, omega, w);
}

std::optional<double> cac(const std::vector<bool>& keep,
                          const std::vector<double>& adjacent_medoid_cos,
                          const std::vector<double>& w, const MetricParams& params,
                          std::vector<int>* omega_out) {
    if (keep.size() != adjacent_medoid_cos.size()) {
        throw std::invalid_argument("cac: keep/cos length mismatch");
    }
    std::vector<double> s(keep.size(), 0.0);
    std::vector<int> omega;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        const double c = adjacent_medoid_cos[i];
        s[i] = std::pow(clip01((c - params.delta_cac) / (1.0 - params.delta_cac)),
                        params.kappa_cac);
        omega.push_back(static_cast<int>(i));
    }
    if (omega_out) *omega_out = omega;
    if (omega.empty()) return std::nullopt;
    return agg_tr(s, omega, w);
}

std::optional<double> clc(const std::map<std::string, ClcGroup>& groups,
                          const std::vector<double>& w, const MetricParams& params) {
    std::vector<double> entity_scores;
    for (const auto& [name, group] : groups) {
        (void)name;
        const auto& occ = group.occurrences;
        if (occ.size() < 2) continue;
        if (group.similarities.size() != occ.size() - 1) {
            throw std::invalid_argument("clc: similarity count mismatch");
        }
        const std::size_t m = occ.size();
        double planner_sum = 0.0;
        for (std::size_t j = 1; j < m; ++j) planner_sum += w[static_cast<std::size_t>(occ[j])];
        double a_e = 0.0;
        for (std::size_t j = 1; j < m; ++j) {
            const double s = std::pow(
                clip01((group.similarities[j - 1] - params.delta_clc) / (1.0 - params.delta_clc)),
                params.kappa_clc);
            const double planner_part =
                planner_sum > 0.0 ? w[static_cast<std::size_t>(occ[j])] / planner_sum
                                  : 1.0 / static_cast<double>(m - 1);
            const double wt = params.lambda_clc * planner_part +
                              (1.0 - params.lambda_clc) / static_cast<double>(m - 1);
            a_e += wt * s;
        }
        entity_scores.push_back(a_e);
    }
    if (entity_scores.empty()) return std::nullopt;
    return mean_of(entity_scores);
}

double eg(const std::vector<std::vector<std::pair<double, double>>>& per_segment,
          const std::vector<double>& w, const MetricParams& params) {
    std::vector<double> s;
    for (const auto& entities : per_segment) {
        if (entities.empty()) {
            s.push_back(params.nu_eg);
            continue;
        }
        double acc = 0.0;
        for (const auto& [presence, match] : entities) acc += presence * match;
        s.push_back(acc / static_cast<double>(entities.size()));
    }
    return agg_seg(s, w);
}

double dt(const std::vector<std::pair<double, double>>& pairs, const std::vector<double>& w,
          const MetricParams& params) {
    std::vector<double> s;
    std::vector<int> omega;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const double d_p = pairs[i].first;
        const double d_v = pairs[i].second;
        const double gate = 1.0 / (1.0 + std::exp(-(d_p - params.mu_dt) / params.tau_gate));
        const double respond = 1.0 - std::exp(-d_v / params.tau_on);
        const double hold = std::exp(-d_v / params.tau_off);
        s.push_back(gate * respond + (1.0 - gate) * hold);
        omega.push_back(static_cast<int>(i));
    }
    return agg_tr(s, omega, w);
}

double vlm_align(const std::vector<int>& segment_scores, int overall,
                 const std::vector<double>& w, const MetricParams& params) {
    std::vector<double> q;
    for (int v : segment_scores) {
        if (v < 1 || v > 100) throw std::invalid_argument("vlm_align: score out of [1,100]");
        q.push_back(static_cast<double>(v) / 100.0);
    }
    if (overall < 1 || overall > 100) throw std::invalid_argument("vlm_align: overall range");
    return params.alpha_vlm * agg_seg(q, w) +
           (1.0 - params.alpha_vlm) * (static_cast<double>(overall) / 100.0);
}

void group_and_overall(MetricReport& report) {
    report.quality = (report.sc + report.bc + report.tf + report.ms + report.vtss) / 5.0;
    std::vector<double> temporal = {report.bs};
    if (report.cac) temporal.push_back(*report.cac);
    if (report.clc) temporal.push_back(*report.clc);
    report.temporal = mean_of(temporal);
    report.instruction = (report.eg + report.dt + report.vlm) / 3.0;
    report.overall = (report.quality + report.temporal + report.instruction) / 3.0;
}

MetricReport score_bundle(const MeasurementBundle& bundle, const MetricParams& params) {
    MetricReport report;
    const int T = bundle.segment_count;
    PlannerWeights pw = planner_weights(bundle.planner_raw, T);
    const std::vector<double>& w = pw.w;

    ConsistencyDiag sc_diag, bc_diag;
    report.sc = consistency_score(bundle.subject_features, w, params, &sc_diag);
    report.bc = consistency_score(bundle.background_features, w, params, &bc_diag);
    std::vector<double> tf_errors, ms_errors;
    report.tf = temporal_flicker(bundle.tf, w, params, &tf_errors);
    report.ms = motion_smoothness(bundle.ms, w, params, &ms_errors);
    report.vtss = vtss(bundle.vtss_raw, w, params);
    report.bs = boundary_smoothness(bundle.bs, w, params);

    // Adjacent medoid cosines over the subject features drive CAC and CLC.
    std::vector<std::vector<double>> medoid_feats;
    for (int i = 0; i < T; ++i) {
        medoid_feats.push_back(bundle.subject_features[static_cast<std::size_t>(i)]
                                                      [sc_diag.medoids[static_cast<std::size_t>(i)]]);
    }
    std::vector<double> adjacent;
    for (int i = 0; i + 1 < T; ++i) {
        adjacent.push_back(cosine(medoid_feats[static_cast<std::size_t>(i)],
                                  medoid_feats[static_cast<std::size_t>(i) + 1]));
    }
    std::vector<int> cac_omega;
    report.cac = cac(bundle.cac_keep, adjacent, w, params, &cac_omega);

    std::map<std::string, ClcGroup> groups;
    for (const auto& [name, occurrences] : bundle.clc_groups) {
        ClcGroup g;
        g.occurrences = occurrences;
        for (std::size_t j = 1; j < occurrences.size(); ++j) {
            g.similarities.push_back(
                cosine(medoid_feats[static_cast<std::size_t>(occurrences[0])],
                       medoid_feats[static_cast<std::size_t>(occurrences[j])]));
        }
        groups.emplace(name, std::move(g));
    }
    report.clc = clc(groups, w, params);

    report.eg = eg(bundle.eg, w, params);
    report.dt = dt(bundle.dt, w, params);
    report.vlm = vlm_align(bundle.vlm_segment_scores, bundle.vlm_overall, w, params);

    group_and_overall(report);

    nlohmann::json diag;
    diag["planner_weights"] = w;
    diag["planner_fallback"] = pw.fallback;
    diag["sc_local"] = sc_diag.local;
    diag["sc_c_adj"] = sc_diag.c_adj;
    diag["sc_c_anchor"] = sc_diag.c_anchor;
    diag["sc_medoids"] = sc_diag.medoids;
    diag["bc_local"] = bc_diag.local;
    diag["bc_c_adj"] = bc_diag.c_adj;
    diag["bc_c_anchor"] = bc_diag.c_anchor;
    diag["bc_medoids"] = bc_diag.medoids;
    diag["tf_segment_errors"] = tf_errors;
    diag["ms_segment_errors"] = ms_errors;
    diag["cac_omega"] = cac_omega;
    diag["cac_adjacent_cos"] = adjacent;
    {
        nlohmann::json clc_diag = nlohmann::json::object();
        for (const auto& [name, g] : groups) {
            clc_diag[name] = {{"occurrences", g.occurrences},
                              {"similarities", g.similarities},
                              {"valid", g.occurrences.size() >= 2}};
        }
        diag["clc_groups"] = clc_diag;
    }
    report.diagnostics = std::move(diag);
    return report;
}

nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json metrics_json = {
        {"subject_consistency", report.sc},
        {"background_consistency", report.bc},
        {"temporal_flickering", report.tf},
        {"motion_smoothness", report.ms},
        {"vtss", report.vtss},
        {"boundary_smoothness", report.bs},
        {"cac", report.cac ? nlohmann::json(*report.cac) : nlohmann::json()},
        {"clc", report.clc ? nlohmann::json(*report.clc) : nlohmann::json()},
        {"entity_grounding", report.eg},
        {"dynamic_trajectory", report.dt},
        {"vlm_alignment", report.vlm},
    };
    return {{"metrics", metrics_json},
            {"groups",
             {{"visual_quality", report.quality},
              {"temporal_consistency", report.temporal},
              {"instruction_compliance", report.instruction}}},
            {"overall", report.overall},
            {"diagnostics", report.diagnostics}};
}

}  // namespace metrics
}  // namespace idstream
