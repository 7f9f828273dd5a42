// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#include "idstream/verifier.hpp"

#include <stdexcept>

namespace idstream {

VerificationResult run_verification(const VerifyTicket& ticket, Oracle& verify_oracle) {
    VerificationResult result;
    result.chunk_id = ticket.chunk_id;
    try {
        OracleRequest req = build_verify_request(ticket.prompt_text, ticket.entity_names,
                                                 ticket.attributes, ticket.first_chunk, 3,
                                                 ticket.images, ticket.deadline_seconds);
        OracleResponse resp = verify_oracle.call(req);
        if (!resp.ok) {
            result.neutral = true;
            return result;
        }
        ParsedVerify parsed = parse_verify_response(resp.body);
        result.frame_scores = parsed.scores;
        result.corrections = parsed.corrections;
        result.neutral = !parsed.structured;
    } catch (const std::exception&) {
        result = VerificationResult{};
        result.chunk_id = ticket.chunk_id;
        result.neutral = true;
    }
    return result;
}

SimulatedVerifier::SimulatedVerifier(VirtualClock& clock, Oracle& oracle, int queue_depth,
                                     LatencyFn latency)
    : clock_(clock), oracle_(oracle), depth_(queue_depth), latency_(std::move(latency)) {
    if (depth_ < 1) throw std::invalid_argument("verifier: queue depth < 1");
}

void SimulatedVerifier::submit(VerifyTicket ticket) {
    double now = clock_.now();
    while (!in_flight_.empty() && in_flight_.front().second <= now) in_flight_.pop_front();
    if (static_cast<int>(in_flight_.size()) >= depth_) {
        double target = in_flight_.front().second;
        blocking_ += target - now;
        clock_.advance_to(target);
        now = target;
        while (!in_flight_.empty() && in_flight_.front().second <= now) in_flight_.pop_front();
    }
    double start = std::max(now, worker_free_);
    double lat = latency_ ? latency_(ticket.chunk_id) : 0.0;
    double finish = start + lat;
    worker_free_ = finish;
    in_flight_.emplace_back(ticket.chunk_id, finish);

    Entry e;
    e.finish = finish;
    e.result = run_verification(ticket, oracle_);
    e.result.latency = lat;
    results_.emplace(ticket.chunk_id, std::move(e));
}

VerificationResult SimulatedVerifier::collect(int chunk_id) {
    auto it = results_.find(chunk_id);
    if (it == results_.end()) {
        throw std::invalid_argument("collect: no ticket for chunk " + std::to_string(chunk_id));
    }
    double now = clock_.now();
    if (it->second.finish > now) {
        blocking_ += it->second.finish - now;
        clock_.advance_to(it->second.finish);
    }
    VerificationResult out = std::move(it->second.result);
    results_.erase(it);
    return out;
}

void SimulatedVerifier::drain() {
    double now = clock_.now();
    if (worker_free_ > now && !results_.empty()) {
        drain_wait_ += worker_free_ - now;
        clock_.advance_to(worker_free_);
    }
    results_.clear();
    in_flight_.clear();
}

ThreadedVerifier::ThreadedVerifier(const Clock& clock, Oracle& oracle, int queue_depth,
                                   double worker_sleep_seconds)
    : clock_(clock), oracle_(oracle), depth_(static_cast<std::size_t>(queue_depth)),
      sleep_seconds_(worker_sleep_seconds) {
    if (queue_depth < 1) throw std::invalid_argument("verifier: queue depth < 1");
    thread_ = std::thread([this] { worker_loop(); });
}

ThreadedVerifier::~ThreadedVerifier() {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        stopping_ = true;
    }
    request_cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void ThreadedVerifier::worker_loop() {
    for (;;) {
        VerifyTicket ticket;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            request_cv_.wait(lock, [this] { return stopping_ || !requests_.empty(); });
            if (requests_.empty()) {
                if (stopping_) return;
                continue;
            }
            ticket = std::move(requests_.front());
            requests_.pop_front();
        }
        if (sleep_seconds_ > 0.0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(sleep_seconds_));
        }
        double t0 = clock_.now();
        VerificationResult result = run_verification(ticket, oracle_);
        result.latency = sleep_seconds_ + (clock_.now() - t0);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            results_.push_back(std::move(result));
            --in_flight_;
        }
        result_cv_.notify_all();
        request_cv_.notify_all();
    }
}

void ThreadedVerifier::submit(VerifyTicket ticket) {
    std::unique_lock<std::mutex> lock(mutex_);
    if (in_flight_ >= depth_) {
        double t0 = clock_.now();
        request_cv_.wait(lock, [this] { return in_flight_ < depth_; });
        blocking_ += clock_.now() - t0;
    }
    ++in_flight_;
    requests_.push_back(std::move(ticket));
    lock.unlock();
    request_cv_.notify_all();
}

VerificationResult ThreadedVerifier::collect(int chunk_id) {
    std::unique_lock<std::mutex> lock(mutex_);
    auto stashed = stashed_.find(chunk_id);
    if (stashed != stashed_.end()) {
        VerificationResult out = std::move(stashed->second);
        stashed_.erase(stashed);
        return out;
    }
    for (;;) {
        while (!results_.empty()) {
            VerificationResult r = std::move(results_.front());
            results_.pop_front();
            if (r.chunk_id == chunk_id) return r;
            stashed_.emplace(r.chunk_id, std::move(r));
        }
        double t0 = clock_.now();
        result_cv_.wait(lock, [this] { return !results_.empty(); });
        blocking_ += clock_.now() - t0;
    }
}

void ThreadedVerifier::drain() {
    std::unique_lock<std::mutex> lock(mutex_);
    double t0 = clock_.now();
    result_cv_.wait(lock, [this] { return in_flight_ == 0 && requests_.empty(); });
    drain_wait_ += clock_.now() - t0;
    results_.clear();
    stashed_.clear();
}

}  // namespace idstream
