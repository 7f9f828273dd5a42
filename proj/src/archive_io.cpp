// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <cstring>
#include <fstream>

#include "idstream/memory.hpp"

namespace idstream {

namespace {

constexpr char kMagic[4] = {'I', 'D', 'K', 'V'};
constexpr std::uint32_t kVersion = 1;

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

void put_f32(std::ostream& out, const std::vector<float>& v) {
    for (float x : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        put_u32(out, bits);
    }
}

void get_f32(std::istream& in, std::vector<float>& v) {
    for (float& x : v) {
        std::uint32_t bits = get_u32(in);
        std::memcpy(&x, &bits, 4);
    }
}

}  // namespace

nlohmann::json archive_to_json(const FrameArchive& archive, const std::string& sidecar_name) {
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : archive.frames()) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& b : f.kv) {
            layers.push_back({{"layer_id", b.layer_id},
                              {"tokens", b.tokens()},
                              {"heads", b.heads()},
                              {"head_dim", b.head_dim()}});
        }
        frames.push_back({{"frame_id", f.frame_id},
                          {"prompt_index", f.prompt_index},
                          {"chunk_index", f.chunk_index},
                          {"frame_in_chunk", f.frame_in_chunk},
                          {"entity_ids", f.entity_ids},
                          {"entity_score_raw", f.entity_score_raw},
                          {"entity_score_norm", f.entity_score_norm},
                          {"visual_score", f.visual_score},
                          {"fused_score", f.fused_score},
                          {"temporal_order", f.temporal_order},
                          {"source_evicted", f.source_evicted},
                          {"layers", layers}});
    }
    nlohmann::json j = {{"frames", frames}};
    if (!sidecar_name.empty()) j["kv_sidecar"] = sidecar_name;
    return j;
}

void write_archive(const FrameArchive& archive, const std::filesystem::path& json_path,
                   bool with_kv) {
    std::string sidecar_name;
    if (with_kv) {
        sidecar_name = json_path.stem().string() + ".kv.bin";
        std::ofstream bin(json_path.parent_path() / sidecar_name, std::ios::binary);
        if (!bin) throw std::runtime_error("cannot write sidecar next to " + json_path.string());
        bin.write(kMagic, 4);
        put_u32(bin, kVersion);
        put_u32(bin, static_cast<std::uint32_t>(archive.size()));
        for (const auto& f : archive.frames()) {
            put_u32(bin, static_cast<std::uint32_t>(f.frame_id));
            put_u32(bin, static_cast<std::uint32_t>(f.kv.size()));
            for (const auto& b : f.kv) {
                put_u32(bin, static_cast<std::uint32_t>(b.layer_id));
                put_u32(bin, static_cast<std::uint32_t>(b.tokens()));
                put_u32(bin, static_cast<std::uint32_t>(b.heads()));
                put_u32(bin, static_cast<std::uint32_t>(b.head_dim()));
                put_f32(bin, b.keys.data);
                put_f32(bin, b.values.data);
            }
        }
    }
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write " + json_path.string());
    out << archive_to_json(archive, sidecar_name).dump(2) << "\n";
}

FrameArchive read_archive(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open archive: " + json_path.string());
    nlohmann::json j;
    in >> j;

    FrameArchive archive;
    std::vector<ArchivedFrame> frames;
    for (const auto& fj : j.at("frames")) {
        ArchivedFrame f;
        f.frame_id = fj.at("frame_id").get<int>();
        f.prompt_index = fj.at("prompt_index").get<int>();
        f.chunk_index = fj.at("chunk_index").get<int>();
        f.frame_in_chunk = fj.value("frame_in_chunk", 0);
        for (int id : fj.at("entity_ids")) f.entity_ids.insert(id);
        f.entity_score_raw = fj.at("entity_score_raw").get<double>();
        f.entity_score_norm = fj.at("entity_score_norm").get<double>();
        f.visual_score = fj.at("visual_score").get<double>();
        f.fused_score = fj.at("fused_score").get<double>();
        f.temporal_order = fj.at("temporal_order").get<int>();
        f.source_evicted = fj.value("source_evicted", false);
        frames.push_back(std::move(f));
    }

    if (j.contains("kv_sidecar")) {
        auto sidecar = json_path.parent_path() / j["kv_sidecar"].get<std::string>();
        std::ifstream bin(sidecar, std::ios::binary);
        if (bin) {
            char magic[4];
            bin.read(magic, 4);
            if (std::memcmp(magic, kMagic, 4) != 0) {
                throw std::runtime_error("bad sidecar magic in " + sidecar.string());
            }
            if (get_u32(bin) != kVersion) {
                throw std::runtime_error("unsupported sidecar version in " + sidecar.string());
            }
            std::uint32_t count = get_u32(bin);
            if (count != frames.size()) {
                throw std::runtime_error("sidecar frame count mismatch in " + sidecar.string());
            }
            for (auto& f : frames) {
                std::uint32_t frame_id = get_u32(bin);
                if (static_cast<int>(frame_id) != f.frame_id) {
                    throw std::runtime_error("sidecar frame id mismatch");
                }
                std::uint32_t layers = get_u32(bin);
                for (std::uint32_t l = 0; l < layers; ++l) {
                    KeyBlock b;
                    b.layer_id = static_cast<int>(get_u32(bin));
                    int tokens = static_cast<int>(get_u32(bin));
                    int heads = static_cast<int>(get_u32(bin));
                    int dim = static_cast<int>(get_u32(bin));
                    b.keys = KeyTensor(tokens, heads, dim);
                    b.values = KeyTensor(tokens, heads, dim);
                    get_f32(bin, b.keys.data);
                    get_f32(bin, b.values.data);
                    f.kv.push_back(std::move(b));
                }
            }
            if (!bin) throw std::runtime_error("truncated sidecar: " + sidecar.string());
        }
    }

    for (auto& f : frames) archive.restore(std::move(f));
    return archive;
}

}  // namespace idstream
