// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/pipeline.hpp"

#include <numeric>
#include <stdexcept>

#include "idstream/png.hpp"

namespace idstream {

void CacheLayout::validate() const {
    if (n_sink < 1 || n_local < 1 || memory_cap < 1 || chunk_size < 1 ||
        pixel_frames_per_chunk < 1) {
        throw std::invalid_argument("cache layout: all fields must be positive");
    }
    if (n_local % chunk_size != 0) {
        throw std::invalid_argument("cache layout: n_local must be a multiple of chunk_size");
    }
}

EfficiencyReport measure(std::vector<double> per_chunk_seconds, double e2e_seconds,
                         double blocking_wait_total, int recache_count,
                         const CacheLayout& layout) {
    EfficiencyReport report;
    report.per_chunk_seconds = std::move(per_chunk_seconds);
    report.e2e_seconds = e2e_seconds;
    report.blocking_wait_total = blocking_wait_total;
    report.recache_count = recache_count;
    if (!report.per_chunk_seconds.empty()) {
        double mean = std::accumulate(report.per_chunk_seconds.begin(),
                                      report.per_chunk_seconds.end(), 0.0) /
                      static_cast<double>(report.per_chunk_seconds.size());
        if (mean > 0.0) report.fps = layout.pixel_frames_per_chunk / mean;
    }
    return report;
}

ArchivalSource archival_source(int chunk_index, const CacheLayout& layout) {
    if (chunk_index < 1) throw std::invalid_argument("archival_source: chunk_index < 1");
    const int window = layout.window_chunks();
    if (chunk_index <= window) return {false, chunk_index};
    return {true, chunk_index - window};
}

namespace {

struct StoredChunk {
    SyntheticChunk chunk;
    std::vector<int> gids;       // global ids present in the chunk's frames
    int prompt_index = 0;
};

class SessionRun {
public:
    SessionRun(const SessionSetup& setup, Generator& generator, const OracleSet& oracles)
        : setup_(setup), generator_(generator), oracles_(oracles) {
        setup_.layout.validate();
        if (setup_.schedule.empty()) throw std::invalid_argument("run_session: empty schedule");
        for (const auto& span : setup_.schedule) {
            if (span.chunks < 1) {
                throw std::invalid_argument("run_session: prompt span must be positive");
            }
        }
        if (setup_.timing.clock == ClockMode::fixed) {
            vclock_ = std::make_unique<VirtualClock>();
            clock_ = vclock_.get();
            LatencyFn latency = [this](int chunk_id) {
                const auto& sched = setup_.timing.verify_schedule;
                if (!sched.empty()) {
                    std::size_t i = static_cast<std::size_t>(chunk_id - 1);
                    return i < sched.size() ? sched[i] : sched.back();
                }
                return setup_.timing.verify_seconds;
            };
            verifier_ = std::make_unique<SimulatedVerifier>(*vclock_, *verify_oracle(),
                                                            setup_.verify_queue_depth, latency);
        } else {
            sclock_ = std::make_unique<SteadyClock>();
            clock_ = sclock_.get();
            verifier_ = std::make_unique<ThreadedVerifier>(*clock_, *verify_oracle(),
                                                           setup_.verify_queue_depth,
                                                           setup_.timing.worker_sleep_seconds);
        }
    }

    SessionResult run();

private:
    Oracle* verify_oracle() {
        if (!oracles_.verify) {
            static NeutralOracle neutral;
            return &neutral;
        }
        return oracles_.verify;
    }

    std::vector<EntityDescriptor> extract_for(const std::string& prompt) {
        if (setup_.oracle_mode == OracleMode::heuristic || !oracles_.extract) {
            return heuristic_extract(prompt, setup_.lexicon);
        }
        return parse_entities(prompt, *oracles_.extract, setup_.lexicon,
                              setup_.oracle_deadline_seconds);
    }

    MatchOutcome assign_id(const EntityDescriptor& d, int prompt_index) {
        if (setup_.oracle_mode == OracleMode::heuristic || !oracles_.match) {
            return match_or_create_with(d, registry_, prompt_index, heuristic_match);
        }
        return match_or_create(d, registry_, prompt_index, *oracles_.match,
                               setup_.oracle_deadline_seconds);
    }

    ActiveMemory retrieve_and_inject(const std::vector<int>& active_gids, int next_chunk);
    void archive_from(int source_chunk, bool evicted, const VerificationResult* result,
                      const TextEncoding& encoding, const std::vector<int>& active_gids,
                      ChunkTrace& trace);
    AttributeSnapshot snapshot_attributes(const std::vector<int>& gids) const;

    SessionSetup setup_;
    Generator& generator_;
    OracleSet oracles_;

    std::unique_ptr<VirtualClock> vclock_;
    std::unique_ptr<SteadyClock> sclock_;
    Clock* clock_ = nullptr;
    std::unique_ptr<Verifier> verifier_;

    GlobalRegistry registry_;
    FrameArchive archive_;
    std::map<int, StoredChunk> stored_;
    std::map<int, bool> first_chunk_flag_;   // chunk id -> first chunk of its prompt
    SessionResult result_;
};

AttributeSnapshot SessionRun::snapshot_attributes(const std::vector<int>& gids) const {
    AttributeSnapshot snap;
    for (int id : gids) {
        if (const RegistryEntry* e = registry_.find(id)) {
            snap[id] = {e->canonical_name, e->attributes};
        }
    }
    return snap;
}

ActiveMemory SessionRun::retrieve_and_inject(const std::vector<int>& active_gids,
                                             int next_chunk) {
    std::set<int> active(active_gids.begin(), active_gids.end());
    ActiveMemory memory = greedy_retrieve(archive_, active, setup_.layout.memory_cap);
    std::set<int> covered;
    for (int fid : memory.frame_ids) {
        for (const auto& f : archive_.frames()) {
            if (f.frame_id == fid) {
                covered.insert(f.entity_ids.begin(), f.entity_ids.end());
            }
        }
    }
    std::vector<std::string> names;
    for (int id : covered) {
        if (const RegistryEntry* e = registry_.find(id)) names.push_back(e->canonical_name);
    }
    if (!names.empty()) generator_.inject_memory(names, next_chunk);
    return memory;
}

void SessionRun::archive_from(int source_chunk, bool evicted, const VerificationResult* result,
                              const TextEncoding& encoding, const std::vector<int>& active_gids,
                              ChunkTrace& trace) {
    auto it = stored_.find(source_chunk);
    if (it == stored_.end()) {
        throw std::runtime_error("archival source chunk " + std::to_string(source_chunk) +
                                 " not available");
    }
    const StoredChunk& src = it->second;

    // Token weights come from the active prompt's entities and the registry's
    // current (possibly corrected) attributes.
    std::vector<std::string> names;
    std::vector<std::string> attrs;
    for (int id : active_gids) {
        if (const RegistryEntry* e = registry_.find(id)) {
            names.push_back(e->canonical_name);
            attrs.insert(attrs.end(), e->attributes.begin(), e->attributes.end());
        }
    }
    TokenWeightVector weights = build_token_weights(
        setup_.schedule[static_cast<std::size_t>(trace.prompt_index - 1)].text, names, attrs,
        encoding.token_count);

    // Text conditioning is padded to a fixed capacity; score over the real
    // token span only.
    KvBlocks text_kv;
    for (const auto& block : encoding.blocks) {
        text_kv.push_back(slice_tokens(block, encoding.token_count));
    }
    std::vector<double> raw_scores;
    raw_scores.reserve(src.chunk.frames.size());
    for (const auto& frame : src.chunk.frames) {
        KvBlocks frame_kv{frame.visual};
        raw_scores.push_back(entity_score(text_kv, frame_kv, weights, setup_.scoring));
    }
    std::vector<double> norm_scores = normalize_entity_scores(raw_scores);

    std::vector<double> fused(raw_scores.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        double visual = 0.5;
        if (result && i < result->frame_scores.size()) visual = result->frame_scores[i];
        fused[i] = fuse_score(norm_scores[i], visual, setup_.scoring.lambda);
    }
    std::size_t best = select_archive_frame(fused);

    ArchivedFrame frame;
    frame.prompt_index = src.prompt_index;
    frame.chunk_index = source_chunk;
    frame.frame_in_chunk = static_cast<int>(best);
    frame.entity_ids.insert(src.gids.begin(), src.gids.end());
    frame.entity_score_raw = raw_scores[best];
    frame.entity_score_norm = norm_scores[best];
    frame.visual_score = result ? result->frame_scores[best] : 0.5;
    frame.fused_score = fused[best];
    frame.kv = KvBlocks{src.chunk.frames[best].visual};
    frame.source_evicted = evicted;
    const ArchivedFrame& added = archive_.add(std::move(frame));

    trace.archived_frame_id = added.frame_id;
    trace.entity_score_raw = added.entity_score_raw;
    trace.entity_score_norm = added.entity_score_norm;
    trace.visual_score = added.visual_score;
    trace.fused_score = added.fused_score;
    trace.visual_neutral = (result == nullptr) || result->neutral;

    if (evicted) stored_.erase(it);
}

SessionResult SessionRun::run() {
    const double t_start = clock_->now();
    const CacheLayout& layout = setup_.layout;

    std::optional<APTState> apt_state;
    TextEncoding encoding;
    std::vector<float> prev_pooled;
    std::deque<int> window;
    int chunk_counter = 0;

    for (std::size_t ti = 0; ti < setup_.schedule.size(); ++ti) {
        const int t = static_cast<int>(ti) + 1;
        const PromptSpan& span = setup_.schedule[ti];

        PromptTrace ptrace;
        ptrace.prompt_index = t;
        ptrace.text = span.text;

        std::vector<EntityDescriptor> descriptors = extract_for(span.text);
        std::vector<int> active_gids;
        std::vector<std::string> active_names;
        for (const auto& d : descriptors) {
            MatchOutcome outcome = assign_id(d, t);
            active_gids.push_back(outcome.global_id);
            ptrace.active_ids.push_back(outcome.global_id);
            ptrace.is_new.push_back(outcome.is_new);
            if (const RegistryEntry* e = registry_.find(outcome.global_id)) {
                active_names.push_back(e->canonical_name);
            }
        }
        ptrace.active_names = active_names;

        TextEncoding new_encoding = generator_.text_keys(span.text, active_names);

        if (t > 1) {
            switch (setup_.transition_mode) {
                case TransitionMode::apt: {
                    KvBlocks current = apt_state ? effective_conditioning(*apt_state, setup_.apt)
                                                 : encoding.blocks;
                    apt_state = begin_transition(current, new_encoding.pooled, prev_pooled,
                                                 setup_.apt);
                    set_new_conditioning(*apt_state, new_encoding.blocks);
                    break;
                }
                case TransitionMode::recache:
                    generator_.recache_context(layout.n_sink + layout.n_local);
                    break;
                case TransitionMode::hard:
                    break;
            }
        }
        encoding = new_encoding;
        prev_pooled = encoding.pooled;
        if (apt_state) ptrace.w_apt = apt_state->w_apt;

        ActiveMemory memory;
        if (setup_.memory_enabled && !setup_.per_chunk_retrieval) {
            memory = retrieve_and_inject(active_gids, chunk_counter + 1);
            ptrace.retrieved_frames = memory.frame_ids;
        }

        for (int c = 1; c <= span.chunks; ++c) {
            const int n = ++chunk_counter;
            const double chunk_t0 = clock_->now();
            const double wait_before = verifier_->blocking_wait_total();

            ChunkTrace trace;
            trace.chunk_index = n;
            trace.prompt_index = t;
            if (apt_state) {
                trace.tau = apt_state->tau;
                trace.alpha = alpha(apt_state->tau, apt_state->w_apt, setup_.apt);
                trace.w_apt = apt_state->w_apt;
            }

            if (setup_.memory_enabled && setup_.per_chunk_retrieval) {
                memory = retrieve_and_inject(active_gids, n);
                if (c == 1) ptrace.retrieved_frames = memory.frame_ids;
            }
            trace.memory_frame_ids = memory.frame_ids;

            SyntheticChunk chunk;
            try {
                chunk = generator_.gen_chunk(n, active_names);
            } catch (const std::exception& e) {
                throw std::runtime_error("generator failed at chunk " + std::to_string(n) +
                                         ": " + e.what());
            }
            if (vclock_) vclock_->advance(setup_.timing.chunk_seconds);

            for (const auto& frame : chunk.frames) {
                for (const auto& [name, cosine] : frame.alignment) {
                    trace.alignment[name] += cosine / chunk.frames.size();
                }
            }

            VerifyTicket ticket;
            ticket.chunk_id = n;
            ticket.prompt_index = t;
            ticket.first_chunk = (c == 1);
            ticket.prompt_text = span.text;
            ticket.entity_names = active_names;
            ticket.attributes = snapshot_attributes(active_gids);
            ticket.deadline_seconds = setup_.oracle_deadline_seconds;
            if (setup_.attach_images) {
                for (const auto& frame : chunk.frames) {
                    ticket.images.push_back(render_latent_png_base64(frame.latent));
                }
            }
            first_chunk_flag_[n] = ticket.first_chunk;

            StoredChunk stored;
            stored.chunk = std::move(chunk);
            stored.gids = active_gids;
            stored.prompt_index = t;
            stored_.emplace(n, std::move(stored));

            verifier_->submit(std::move(ticket));

            window.push_back(n);
            if (static_cast<int>(window.size()) > layout.window_chunks()) window.pop_front();

            ArchivalSource source = archival_source(n, layout);
            trace.source_evicted = source.evicted;
            trace.source_chunk = source.source_chunk;

            if (source.evicted) {
                VerificationResult vres = verifier_->collect(source.source_chunk);
                if (first_chunk_flag_[source.source_chunk] && !vres.corrections.empty()) {
                    trace.corrections_applied = registry_.apply_corrections(vres.corrections);
                }
                archive_from(source.source_chunk, true, &vres, encoding, active_gids, trace);
            } else {
                archive_from(source.source_chunk, false, nullptr, encoding, active_gids, trace);
            }

            if (apt_state && apt_state->active) {
                advance_transition(*apt_state, layout.chunk_size, setup_.apt);
            }

            trace.chunk_seconds = clock_->now() - chunk_t0;
            trace.blocking_wait = verifier_->blocking_wait_total() - wait_before;
            result_.chunks.push_back(std::move(trace));
        }
        result_.prompts.push_back(std::move(ptrace));
    }

    verifier_->drain();
    stored_.clear();

    std::vector<double> per_chunk;
    per_chunk.reserve(result_.chunks.size());
    for (const auto& ct : result_.chunks) per_chunk.push_back(ct.chunk_seconds);
    result_.efficiency = measure(std::move(per_chunk), clock_->now() - t_start,
                                 verifier_->blocking_wait_total(), generator_.recache_count(),
                                 layout);
    result_.registry = std::move(registry_);
    result_.archive = std::move(archive_);
    return std::move(result_);
}

}  // namespace

SessionResult run_session(const SessionSetup& setup, Generator& generator,
                          const OracleSet& oracles) {
    SessionRun run(setup, generator, oracles);
    return run.run();
}

}  // namespace idstream
