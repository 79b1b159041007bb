#pragma once
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <thread>

namespace uijudge {

// Time source used by the gateway for rate limiting, retry backoff and
// transcript timestamps. Swapping in a ManualClock makes budget and
// backoff behaviour fully deterministic under test.
class Clock {
public:
    using duration = std::chrono::nanoseconds;
    using time_point = std::chrono::time_point<std::chrono::steady_clock, duration>;

    virtual ~Clock() = default;
    virtual time_point now() = 0;
    virtual void sleep_until(time_point tp) = 0;

    void sleep_for(duration d) { sleep_until(now() + d); }

    static std::int64_t to_ns(time_point tp) {
        return std::chrono::duration_cast<std::chrono::nanoseconds>(tp.time_since_epoch()).count();
    }
};

class SystemClock final : public Clock {
public:
    time_point now() override {
        return std::chrono::time_point_cast<duration>(std::chrono::steady_clock::now());
    }
    void sleep_until(time_point tp) override { std::this_thread::sleep_until(tp); }
};

// Starts at t=0 and only moves when advance() is called. sleep_until()
// blocks the calling thread until another thread advances past the target.
class ManualClock final : public Clock {
public:
    time_point now() override {
        std::lock_guard lock(mu_);
        return now_;
    }

    void sleep_until(time_point tp) override {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return now_ >= tp; });
    }

    void advance(duration d) {
        {
            std::lock_guard lock(mu_);
            now_ += d;
        }
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    time_point now_{};
};

} // namespace uijudge
