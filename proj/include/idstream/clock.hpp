// Copyright (C) 2026 the idstream authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>

namespace idstream {

/// Monotonic time source, injectable so timing assertions are deterministic.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() const = 0;  // seconds
};

class SteadyClock : public Clock {
public:
    SteadyClock() : start_(std::chrono::steady_clock::now()) {}
    double now() const override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

/// Logical clock advanced explicitly by instrumented operations.
class VirtualClock : public Clock {
public:
    double now() const override { return t_; }
    void advance(double seconds) { t_ += seconds; }
    void advance_to(double t) { t_ = std::max(t_, t); }

private:
    double t_ = 0.0;
};

}  // namespace idstream
