// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "idstream/clock.hpp"
#include "idstream/oracles.hpp"

namespace idstream {

/// Work item handed to the verification worker. Carries an immutable
/// snapshot of everything the worker needs; the worker never touches live
/// session state.
struct VerifyTicket {
    int chunk_id = 0;
    int prompt_index = 0;
    bool first_chunk = false;
    std::string prompt_text;
    std::vector<std::string> entity_names;
    AttributeSnapshot attributes;
    std::vector<std::string> images;  // base64 PNG, optional
    double deadline_seconds = 10.0;
};

struct VerificationResult {
    int chunk_id = 0;
    std::array<double, 3> frame_scores{0.5, 0.5, 0.5};  // sampled pixel frames {0,4,8}
    std::map<int, std::vector<std::string>> corrections;
    double latency = 0.0;
    bool neutral = false;  // worker or oracle failure fallback
};

/// Decode+score one ticket. Any failure yields the neutral result.
VerificationResult run_verification(const VerifyTicket& ticket, Oracle& verify_oracle);

/// Asynchronous verification channel: order-preserving submission and
/// collection, bounded in-flight depth with backpressure.
class Verifier {
public:
    virtual ~Verifier() = default;
    /// Never blocks while the queue has room; blocks (and accounts the wait)
    /// beyond the configured depth.
    virtual void submit(VerifyTicket ticket) = 0;
    /// Blocks until the result for chunk_id is available.
    virtual VerificationResult collect(int chunk_id) = 0;
    /// Consumes all outstanding work (end-of-session output assembly).
    virtual void drain() = 0;
    /// Total generation-path blocking: backpressure plus collect waits.
    virtual double blocking_wait_total() const = 0;
    /// Wait spent in drain(), reported separately from the generation path.
    virtual double drain_wait() const = 0;
};

using LatencyFn = std::function<double(int chunk_id)>;

/// Discrete-event model of the single background worker, driven by the
/// virtual clock. Used with the fixed clock so reports are byte-reproducible.
class SimulatedVerifier : public Verifier {
public:
    SimulatedVerifier(VirtualClock& clock, Oracle& oracle, int queue_depth, LatencyFn latency);

    void submit(VerifyTicket ticket) override;
    VerificationResult collect(int chunk_id) override;
    void drain() override;
    double blocking_wait_total() const override { return blocking_; }
    double drain_wait() const override { return drain_wait_; }

private:
    struct Entry {
        double finish = 0.0;
        VerificationResult result;
    };
    VirtualClock& clock_;
    Oracle& oracle_;
    int depth_;
    LatencyFn latency_;
    double worker_free_ = 0.0;
    std::deque<std::pair<int, double>> in_flight_;  // (chunk_id, finish)
    std::map<int, Entry> results_;
    double blocking_ = 0.0;
    double drain_wait_ = 0.0;
};

/// Real single worker thread with two order-preserving channels.
class ThreadedVerifier : public Verifier {
public:
    ThreadedVerifier(const Clock& clock, Oracle& oracle, int queue_depth,
                     double worker_sleep_seconds);
    ~ThreadedVerifier() override;

    void submit(VerifyTicket ticket) override;
    VerificationResult collect(int chunk_id) override;
    void drain() override;
    double blocking_wait_total() const override { return blocking_; }
    double drain_wait() const override { return drain_wait_; }

private:
    void worker_loop();

    const Clock& clock_;
    Oracle& oracle_;
    std::size_t depth_;
    double sleep_seconds_;

    std::mutex mutex_;
    std::condition_variable request_cv_;
    std::condition_variable result_cv_;
    std::deque<VerifyTicket> requests_;
    std::deque<VerificationResult> results_;
    std::map<int, VerificationResult> stashed_;
    std::size_t in_flight_ = 0;
    bool stopping_ = false;
    double blocking_ = 0.0;
    double drain_wait_ = 0.0;
    std::thread thread_;
};

}  // namespace idstream
