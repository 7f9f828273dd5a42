// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "idstream/bundle.hpp"
#include "idstream/config.hpp"
#include "idstream/metrics.hpp"
#include "idstream/report.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

using namespace idstream;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

int cmd_simulate(const std::string& config_path, std::int64_t seed_override,
                 const std::string& out_path, const std::string& dump_registry,
                 const std::string& dump_archive) {
    EngineConfig config;
    try {
        config = config_path.empty() ? default_config() : load_config(config_path);
        if (seed_override >= 0) {
            config.seed = static_cast<std::uint64_t>(seed_override);
            config.world.seed = config.seed;
        }
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        SimulationOutput out = run_simulation(config);
        write_text(out_path, out.report.dump(2) + "\n");
        if (!dump_registry.empty()) {
            write_text(dump_registry, out.result.registry.to_json().dump(2) + "\n");
        }
        if (!dump_archive.empty()) {
            write_archive(out.result.archive, dump_archive, true);
        }
        const auto& eff = out.result.efficiency;
        std::cout << "chunks: " << out.result.chunks.size()
                  << "  archive: " << out.result.archive.size()
                  << "  entities: " << out.result.registry.entries().size() << "\n"
                  << "e2e: " << eff.e2e_seconds << " s  fps: " << eff.fps
                  << "  blocking: " << eff.blocking_wait_total
                  << " s  recaches: " << eff.recache_count << "\n"
                  << "report written to " << out_path << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "simulation failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

std::string x100(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v * 100.0;
    return os.str();
}

void print_summary(const metrics::MetricReport& report) {
    std::cout << "SC " << x100(report.sc) << "  BC " << x100(report.bc) << "  TF "
              << x100(report.tf) << "  MS " << x100(report.ms) << "  VTSS "
              << x100(report.vtss) << "\n"
              << "BS " << x100(report.bs) << "  CAC "
              << (report.cac ? x100(*report.cac) : "absent") << "  CLC "
              << (report.clc ? x100(*report.clc) : "absent") << "\n"
              << "EG " << x100(report.eg) << "  DT " << x100(report.dt) << "  VLM "
              << x100(report.vlm) << "\n"
              << "groups: quality " << x100(report.quality) << "  temporal "
              << x100(report.temporal) << "  instruction " << x100(report.instruction) << "\n"
              << "overall " << x100(report.overall) << "\n";
    if (report.diagnostics.value("planner_fallback", false)) {
        std::cout << "note: planner weights missing or malformed; uniform aggregation\n";
    }
}

/// Dataset averaging: per metric over the samples where it is present
/// (absent CAC/CLC samples are excluded from those averages), then groups
/// and the overall from the averaged metrics.
metrics::MetricReport dataset_average(const std::vector<metrics::MetricReport>& samples) {
    metrics::MetricReport avg;
    auto mean_field = [&](auto getter) {
        double sum = 0.0;
        for (const auto& r : samples) sum += getter(r);
        return sum / static_cast<double>(samples.size());
    };
    avg.sc = mean_field([](const auto& r) { return r.sc; });
    avg.bc = mean_field([](const auto& r) { return r.bc; });
    avg.tf = mean_field([](const auto& r) { return r.tf; });
    avg.ms = mean_field([](const auto& r) { return r.ms; });
    avg.vtss = mean_field([](const auto& r) { return r.vtss; });
    avg.bs = mean_field([](const auto& r) { return r.bs; });
    avg.eg = mean_field([](const auto& r) { return r.eg; });
    avg.dt = mean_field([](const auto& r) { return r.dt; });
    avg.vlm = mean_field([](const auto& r) { return r.vlm; });
    double cac_sum = 0.0, clc_sum = 0.0;
    int cac_n = 0, clc_n = 0;
    for (const auto& r : samples) {
        if (r.cac) {
            cac_sum += *r.cac;
            ++cac_n;
        }
        if (r.clc) {
            clc_sum += *r.clc;
            ++clc_n;
        }
    }
    if (cac_n > 0) avg.cac = cac_sum / cac_n;
    if (clc_n > 0) avg.clc = clc_sum / clc_n;
    metrics::group_and_overall(avg);
    avg.diagnostics = {{"samples", samples.size()},
                       {"cac_valid_samples", cac_n},
                       {"clc_valid_samples", clc_n}};
    return avg;
}

int cmd_score(const std::vector<std::string>& bundle_paths, const std::string& out_path) {
    std::vector<metrics::MetricReport> reports;
    for (const auto& path : bundle_paths) {
        MeasurementBundle bundle;
        try {
            bundle = load_bundle(path);
        } catch (const std::exception& e) {
            std::cerr << "bundle error in " << path << ": " << e.what() << "\n";
            return kExitUsage;
        }
        try {
            reports.push_back(metrics::score_bundle(bundle));
        } catch (const std::exception& e) {
            std::cerr << "scoring failed for " << path << ": " << e.what() << "\n";
            return kExitRuntime;
        }
    }
    try {
        if (reports.size() == 1) {
            write_text(out_path, metrics::report_to_json(reports[0]).dump(2) + "\n");
            print_summary(reports[0]);
        } else {
            nlohmann::json samples = nlohmann::json::array();
            for (const auto& r : reports) samples.push_back(metrics::report_to_json(r));
            metrics::MetricReport avg = dataset_average(reports);
            nlohmann::json doc = {{"samples", samples},
                                  {"average", metrics::report_to_json(avg)}};
            write_text(out_path, doc.dump(2) + "\n");
            std::cout << "dataset average over " << reports.size() << " bundles:\n";
            print_summary(avg);
        }
        std::cout << "report written to " << out_path << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "scoring failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_retrieve(const std::string& archive_path, const std::string& ids_csv, int cap) {
    FrameArchive archive;
    try {
        archive = read_archive(archive_path);
    } catch (const std::exception& e) {
        std::cerr << "archive error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::set<int> known;
    for (const auto& f : archive.frames()) known.insert(f.entity_ids.begin(), f.entity_ids.end());

    std::set<int> active;
    std::stringstream ss(ids_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            int id = std::stoi(item);
            active.insert(id);
            if (!known.count(id)) {
                std::cout << "warning: id " << id << " never appears in the archive\n";
            }
        } catch (const std::exception&) {
            std::cerr << "bad id: " << item << "\n";
            return kExitUsage;
        }
    }

    try {
        ActiveMemory memory = greedy_retrieve(archive, active, cap);
        std::set<int> covered;
        std::cout << "selected " << memory.frame_ids.size() << " frame(s), cap " << cap << "\n";
        for (int fid : memory.frame_ids) {
            for (const auto& f : archive.frames()) {
                if (f.frame_id != fid) continue;
                std::cout << "  frame " << fid << " (chunk " << f.chunk_index << ", entities [";
                bool first = true;
                for (int id : f.entity_ids) {
                    if (!first) std::cout << ",";
                    std::cout << id;
                    first = false;
                    if (active.count(id)) covered.insert(id);
                }
                std::cout << "], entity " << f.entity_score_norm << ", fused " << f.fused_score
                          << ")\n";
            }
        }
        std::cout << "coverage: " << covered.size() << "/" << active.size() << " active ids";
        if (covered.size() < active.size()) {
            std::cout << " (uncovered:";
            for (int id : active) {
                if (!covered.count(id)) std::cout << " " << id;
            }
            std::cout << ")";
        }
        std::cout << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "retrieval failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_bench(const std::string& config_path, int repeat) {
    EngineConfig config;
    try {
        config = config_path.empty() ? default_config() : load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    }
    try {
        // Warmup run excluded from the stats.
        run_simulation(config);
        double sum_e2e = 0.0, min_e2e = 0.0, sum_fps = 0.0, sum_block = 0.0;
        int recaches = 0;
        for (int i = 0; i < repeat; ++i) {
            SimulationOutput out = run_simulation(config);
            const auto& eff = out.result.efficiency;
            sum_e2e += eff.e2e_seconds;
            min_e2e = (i == 0) ? eff.e2e_seconds : std::min(min_e2e, eff.e2e_seconds);
            sum_fps += eff.fps;
            sum_block += eff.blocking_wait_total;
            recaches = eff.recache_count;
        }
        std::cout << "trials: " << repeat << " (plus warmup)\n"
                  << "e2e mean: " << sum_e2e / repeat << " s  min: " << min_e2e << " s\n"
                  << "fps mean: " << sum_fps / repeat << "\n"
                  << "blocking mean: " << sum_block / repeat << " s\n"
                  << "recache count: " << recaches << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "bench failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_mock_serve(const std::string& script_path, int port) {
    try {
        MockOracle oracle =
            script_path.empty() ? MockOracle() : MockOracle::from_file(script_path);
        MockServer server(std::move(oracle), port);
        std::cout << "mock oracle listening on 127.0.0.1:" << server.port()
                  << " (POST /oracle)\n";
        // Serve until interrupted.
        for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
    } catch (const std::exception& e) {
        std::cerr << "mock server failed: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"identity-aware streaming memory engine"};
    app.require_subcommand(1);

    std::string config_path, out_path, dump_registry, dump_archive;
    std::int64_t seed_override = -1;
    auto* simulate = app.add_subcommand("simulate", "run a streaming session");
    simulate->add_option("--config", config_path, "config JSON path");
    simulate->add_option("--seed", seed_override, "seed override");
    simulate->add_option("--out", out_path, "session report path")->default_val("report.json");
    simulate->add_option("--dump-registry", dump_registry, "write the registry dump here");
    simulate->add_option("--dump-archive", dump_archive,
                         "write archive metadata + KV sidecar here");

    std::vector<std::string> bundle_paths;
    std::string score_out;
    auto* score = app.add_subcommand("score", "score measurement bundles");
    score->add_option("--bundle", bundle_paths, "bundle JSON path (repeatable)")->required();
    score->add_option("--out", score_out, "metric report path")->default_val("metrics.json");

    std::string archive_path, ids_csv;
    int cap = 4;
    auto* retrieve = app.add_subcommand("retrieve", "debug greedy retrieval over an archive");
    retrieve->add_option("--archive", archive_path, "archive JSON path")->required();
    retrieve->add_option("--ids", ids_csv, "comma-separated active entity ids")->required();
    retrieve->add_option("--cap", cap, "memory cap");

    std::string bench_config;
    int repeat = 3;
    auto* bench = app.add_subcommand("bench", "timed repeats of a session");
    bench->add_option("--config", bench_config, "config JSON path");
    bench->add_option("--repeat", repeat, "number of timed trials")->default_val(3);

    std::string serve_script;
    int port = 8123;
    auto* serve = app.add_subcommand("mock-oracle", "serve a scripted oracle over HTTP");
    auto* serve_cmd = serve->add_subcommand("serve", "start the server");
    serve_cmd->add_option("--script", serve_script, "mock script JSON path");
    serve_cmd->add_option("--port", port, "listen port")->default_val(8123);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    if (simulate->parsed()) {
        return cmd_simulate(config_path, seed_override, out_path, dump_registry, dump_archive);
    }
    if (score->parsed()) return cmd_score(bundle_paths, score_out);
    if (retrieve->parsed()) return cmd_retrieve(archive_path, ids_csv, cap);
    if (bench->parsed()) return cmd_bench(bench_config, repeat);
    if (serve->parsed() && serve_cmd->parsed()) return cmd_mock_serve(serve_script, port);

    std::cerr << "no subcommand\n";
    return kExitUsage;
}
