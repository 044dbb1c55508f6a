#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace lcdnet {

/// Simulated timeline. Never tied to wall-clock time except in the threaded
/// runtime, where the fabric thread drives it from a steady clock.
struct SimClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::nanoseconds;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using VirtualTime = SimClock::time_point;
using VirtualDuration = SimClock::duration;

inline double to_micros(VirtualDuration d) { return static_cast<double>(d.count()) / 1000.0; }
inline double to_micros(VirtualTime t) { return to_micros(t.time_since_epoch()); }

class VirtualClock {
 public:
  VirtualTime now() const noexcept {
    return VirtualTime{VirtualDuration{ns_.load(std::memory_order_acquire)}};
  }

  // Monotonic: earlier targets are ignored.
  void advance_to(VirtualTime t) noexcept {
    const auto target = t.time_since_epoch().count();
    auto cur = ns_.load(std::memory_order_relaxed);
    while (cur < target && !ns_.compare_exchange_weak(cur, target, std::memory_order_acq_rel)) {
    }
  }

 private:
  std::atomic<std::int64_t> ns_{0};
};

}  // namespace lcdnet
