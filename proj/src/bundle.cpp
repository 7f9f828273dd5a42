// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace idstream {

namespace {

constexpr char kNdMagic[4] = {'N', 'D', 'F', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void flatten_into(const nlohmann::json& value, NdArray& out, std::vector<std::size_t>& dims,
                  std::size_t depth, const std::string& field) {
    if (value.is_array()) {
        if (depth == dims.size()) {
            dims.push_back(value.size());
        } else if (dims[depth] != value.size()) {
            throw BundleError(field, "ragged array");
        }
        for (const auto& v : value) flatten_into(v, out, dims, depth + 1, field);
    } else if (value.is_number()) {
        if (depth != dims.size()) throw BundleError(field, "inconsistent nesting depth");
        out.data.push_back(value.get<double>());
    } else {
        throw BundleError(field, "expected number or array");
    }
}

}  // namespace

NdArray read_ndarray_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open array file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kNdMagic, 4) != 0) {
        throw std::runtime_error("bad array magic in " + path.string());
    }
    std::uint32_t rank = get_u32(in);
    if (rank == 0 || rank > 8) throw std::runtime_error("bad array rank in " + path.string());
    NdArray arr;
    for (std::uint32_t i = 0; i < rank; ++i) arr.dims.push_back(get_u32(in));
    std::size_t total = NdArray::expected_size(arr.dims);
    arr.data.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        std::uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        arr.data[i] = static_cast<double>(f);
    }
    if (!in) throw std::runtime_error("truncated array file: " + path.string());
    return arr;
}

void write_ndarray_file(const NdArray& array, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write array file: " + path.string());
    out.write(kNdMagic, 4);
    put_u32(out, static_cast<std::uint32_t>(array.dims.size()));
    for (std::size_t d : array.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : array.data) {
        float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

NdArray load_ndarray(const nlohmann::json& value, const std::filesystem::path& base_dir) {
    if (value.is_object() && value.contains("file")) {
        return read_ndarray_file(base_dir / value.at("file").get<std::string>());
    }
    NdArray arr;
    std::vector<std::size_t> dims;
    flatten_into(value, arr, dims, 0, "array");
    arr.dims = dims;
    if (arr.data.size() != NdArray::expected_size(arr.dims)) {
        throw BundleError("array", "size does not match dimensions");
    }
    return arr;
}

namespace {

const nlohmann::json& require(const nlohmann::json& j, const std::string& field) {
    if (!j.contains(field)) throw BundleError(field, "missing");
    return j.at(field);
}

std::vector<std::vector<std::vector<double>>> parse_features(const nlohmann::json& j,
                                                             const std::string& field, int T) {
    if (!j.is_array() || static_cast<int>(j.size()) != T) {
        throw BundleError(field, "expected " + std::to_string(T) + " segments");
    }
    std::vector<std::vector<std::vector<double>>> out;
    std::size_t dim = 0;
    for (const auto& seg : j) {
        if (!seg.is_array() || seg.size() != 5) {
            throw BundleError(field, "expected 5 feature vectors per segment");
        }
        std::vector<std::vector<double>> vs;
        for (const auto& vec : seg) {
            if (!vec.is_array() || vec.empty()) throw BundleError(field, "bad feature vector");
            std::vector<double> v = vec.get<std::vector<double>>();
            if (dim == 0) dim = v.size();
            if (v.size() != dim) throw BundleError(field, "feature length mismatch");
            double norm = 0.0;
            for (double x : v) norm += x * x;
            if (std::abs(std::sqrt(norm) - 1.0) > 1e-6) {
                throw BundleError(field, "feature vector not unit-normalized");
            }
            vs.push_back(std::move(v));
        }
        out.push_back(std::move(vs));
    }
    return out;
}

}  // namespace

MeasurementBundle parse_bundle(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    MeasurementBundle b;
    b.segment_count = j.value("segment_count", 6);
    if (b.segment_count < 2) throw BundleError("segment_count", "must be >= 2");
    const int T = b.segment_count;

    if (j.contains("planner") && j.at("planner").is_array()) {
        for (const auto& v : j.at("planner")) {
            if (!v.is_number_integer()) {
                b.planner_raw.clear();
                b.planner_raw.push_back(0);  // malformed marker -> uniform fallback
                break;
            }
            b.planner_raw.push_back(v.get<int>());
        }
    }

    b.subject_features = parse_features(require(j, "subject_features"), "subject_features", T);
    b.background_features =
        parse_features(require(j, "background_features"), "background_features", T);

    const auto& tf = require(j, "tf");
    if (!tf.is_array() || static_cast<int>(tf.size()) != T) {
        throw BundleError("tf", "expected " + std::to_string(T) + " segments");
    }
    for (const auto& seg : tf) {
        TfSegment s;
        const auto& frames = seg.contains("frames") ? seg.at("frames")
                                                    : throw BundleError("tf.frames", "missing");
        NdArray stack = load_ndarray(frames, base_dir);
        if (stack.rank() != 3) throw BundleError("tf.frames", "expected (K, H, W)");
        const std::size_t K = stack.dims[0];
        if (K < 2) throw BundleError("tf.frames", "need at least 2 frames");
        const std::size_t H = stack.dims[1];
        const std::size_t W = stack.dims[2];
        for (std::size_t k = 0; k < K; ++k) {
            NdArray frame{{H, W}, {}};
            frame.data.assign(stack.data.begin() + static_cast<long>(k * H * W),
                              stack.data.begin() + static_cast<long>((k + 1) * H * W));
            s.frames.push_back(std::move(frame));
        }
        for (const char* key : {"flow_fwd", "flow_bwd"}) {
            if (!seg.contains(key)) throw BundleError(std::string("tf.") + key, "missing");
            NdArray flows = load_ndarray(seg.at(key), base_dir);
            if (flows.rank() != 4 || flows.dims[0] != K - 1 || flows.dims[1] != H ||
                flows.dims[2] != W || flows.dims[3] != 2) {
                throw BundleError(std::string("tf.") + key, "expected (K-1, H, W, 2)");
            }
            auto& target = std::string(key) == "flow_fwd" ? s.flow_fwd : s.flow_bwd;
            for (std::size_t k = 0; k + 1 < K; ++k) {
                NdArray field{{H, W, 2}, {}};
                field.data.assign(flows.data.begin() + static_cast<long>(k * H * W * 2),
                                  flows.data.begin() + static_cast<long>((k + 1) * H * W * 2));
                target.push_back(std::move(field));
            }
        }
        b.tf.push_back(std::move(s));
    }

    const auto& ms = require(j, "ms");
    if (!ms.is_array() || static_cast<int>(ms.size()) != T) {
        throw BundleError("ms", "expected " + std::to_string(T) + " segments");
    }
    for (const auto& seg : ms) {
        MsSegment s;
        if (seg.contains("error")) {
            if (!seg.at("error").is_number()) throw BundleError("ms.error", "expected number");
            s.error = seg.at("error").get<double>();
        } else {
            if (!seg.contains("originals") || !seg.contains("midpoints")) {
                throw BundleError("ms", "need either error or originals+midpoints");
            }
            NdArray orig = load_ndarray(seg.at("originals"), base_dir);
            NdArray mids = load_ndarray(seg.at("midpoints"), base_dir);
            if (orig.rank() < 3 || orig.dims != mids.dims) {
                throw BundleError("ms.originals", "originals/midpoints shape mismatch");
            }
            const std::size_t P = orig.dims[0];
            const std::size_t stride = orig.size() / P;
            std::vector<std::size_t> frame_dims(orig.dims.begin() + 1, orig.dims.end());
            for (std::size_t k = 0; k < P; ++k) {
                NdArray fo{frame_dims, {}};
                fo.data.assign(orig.data.begin() + static_cast<long>(k * stride),
                               orig.data.begin() + static_cast<long>((k + 1) * stride));
                NdArray fm{frame_dims, {}};
                fm.data.assign(mids.data.begin() + static_cast<long>(k * stride),
                               mids.data.begin() + static_cast<long>((k + 1) * stride));
                s.originals.push_back(std::move(fo));
                s.midpoints.push_back(std::move(fm));
            }
        }
        b.ms.push_back(std::move(s));
    }

    const auto& vt = require(j, "vtss");
    if (!vt.is_array() || static_cast<int>(vt.size()) != T) {
        throw BundleError("vtss", "expected " + std::to_string(T) + " values");
    }
    b.vtss_raw = vt.get<std::vector<double>>();

    const auto& bs = require(j, "bs");
    if (!bs.is_array() || static_cast<int>(bs.size()) != T - 1) {
        throw BundleError("bs", "expected " + std::to_string(T - 1) + " triples");
    }
    for (const auto& triple : bs) {
        if (!triple.is_array() || triple.size() != 3) {
            throw BundleError("bs", "each entry must be [before, across, after]");
        }
        b.bs.push_back({triple[0].get<double>(), triple[1].get<double>(),
                        triple[2].get<double>()});
    }

    const auto& keep = require(j, "cac_keep");
    if (!keep.is_array() || static_cast<int>(keep.size()) != T - 1) {
        throw BundleError("cac_keep", "expected " + std::to_string(T - 1) + " booleans");
    }
    for (const auto& v : keep) {
        if (!v.is_boolean()) throw BundleError("cac_keep", "expected booleans");
        b.cac_keep.push_back(v.get<bool>());
    }

    if (j.contains("clc_groups")) {
        const auto& groups = j.at("clc_groups");
        if (!groups.is_object()) throw BundleError("clc_groups", "expected object");
        for (const auto& [name, occ] : groups.items()) {
            if (!occ.is_array()) throw BundleError("clc_groups", "expected occurrence arrays");
            std::vector<int> indices;
            for (const auto& v : occ) {
                if (!v.is_number_integer()) throw BundleError("clc_groups", "non-integer index");
                int idx = v.get<int>();
                if (idx < 0 || idx >= T) {
                    throw BundleError("clc_groups", "segment index out of range");
                }
                indices.push_back(idx);
            }
            std::sort(indices.begin(), indices.end());
            indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
            b.clc_groups.emplace(name, std::move(indices));
        }
    }

    const auto& eg = require(j, "eg");
    if (!eg.is_array() || static_cast<int>(eg.size()) != T) {
        throw BundleError("eg", "expected " + std::to_string(T) + " segments");
    }
    for (const auto& seg : eg) {
        if (!seg.is_array()) throw BundleError("eg", "expected entity arrays");
        std::vector<std::pair<double, double>> entities;
        for (const auto& pair : seg) {
            if (!pair.is_array() || pair.size() != 2) {
                throw BundleError("eg", "each entity must be [presence, match]");
            }
            double a = pair[0].get<double>();
            double m = pair[1].get<double>();
            if (a < 0.0 || a > 1.0 || m < 0.0 || m > 1.0) {
                throw BundleError("eg", "scores must lie in [0,1]");
            }
            entities.emplace_back(a, m);
        }
        b.eg.push_back(std::move(entities));
    }

    const auto& dt = require(j, "dt");
    if (!dt.is_array() || static_cast<int>(dt.size()) != T - 1) {
        throw BundleError("dt", "expected " + std::to_string(T - 1) + " pairs");
    }
    for (const auto& pair : dt) {
        if (!pair.is_array() || pair.size() != 2) {
            throw BundleError("dt", "each entry must be [d_p, d_v]");
        }
        double dp = pair[0].get<double>();
        double dv = pair[1].get<double>();
        if (dp < 0.0 || dv < 0.0) throw BundleError("dt", "distances must be >= 0");
        b.dt.emplace_back(dp, dv);
    }

    const auto& vlm = require(j, "vlm");
    if (!vlm.is_object()) throw BundleError("vlm", "expected object");
    const auto& seg_scores = require(vlm, "segment_scores");
    if (!seg_scores.is_array() || static_cast<int>(seg_scores.size()) != T) {
        throw BundleError("vlm.segment_scores", "expected " + std::to_string(T) + " scores");
    }
    for (const auto& v : seg_scores) {
        if (!v.is_number_integer()) throw BundleError("vlm.segment_scores", "expected integers");
        int q = v.get<int>();
        if (q < 1 || q > 100) throw BundleError("vlm.segment_scores", "score out of [1,100]");
        b.vlm_segment_scores.push_back(q);
    }
    if (!vlm.contains("overall_score") || !vlm.at("overall_score").is_number_integer()) {
        throw BundleError("vlm.overall_score", "expected integer");
    }
    b.vlm_overall = vlm.at("overall_score").get<int>();
    if (b.vlm_overall < 1 || b.vlm_overall > 100) {
        throw BundleError("vlm.overall_score", "score out of [1,100]");
    }
    return b;
}

MeasurementBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BundleError("bundle", "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw BundleError("bundle", std::string("invalid JSON: ") + e.what());
    }
    return parse_bundle(j, path.parent_path());
}

}  // namespace idstream
