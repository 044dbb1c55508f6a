#pragma once

// Application <-> engine message channel: bounded SPSC queues in each
// direction plus a control pair, and a wakeup primitive so application threads
// can sleep until the engine hands them something.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <vector>

#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/net_types.hpp"
#include "lcdnet/spsc_ring.hpp"
#include "lcdnet/time.hpp"

namespace lcdnet {

inline constexpr std::size_t kChannelCapacity = 1024;

struct FlowHandle {
  Ipv4Addr remote_ip;
  std::uint16_t local_port = 0;
  std::uint16_t remote_port = 0;

  constexpr std::uint64_t pack() const {
    return (std::uint64_t{remote_ip.value} << 32) | (std::uint64_t{local_port} << 16) | remote_port;
  }
  static constexpr FlowHandle unpack(std::uint64_t v) {
    return {Ipv4Addr{static_cast<std::uint32_t>(v >> 32)}, static_cast<std::uint16_t>((v >> 16) & 0xffff),
            static_cast<std::uint16_t>(v & 0xffff)};
  }
  friend constexpr auto operator<=>(const FlowHandle&, const FlowHandle&) = default;
};

struct Message {
  FlowHandle flow;
  std::vector<std::uint8_t> payload;
};

enum class ControlKind : std::uint8_t { kListen, kConnect, kClose };

struct ControlRequest {
  ControlKind kind = ControlKind::kListen;
  std::uint64_t request_id = 0;
  Ipv4Addr remote_ip;
  std::uint16_t port = 0;
  FlowHandle flow;
};

enum class EventKind : std::uint8_t {
  kListening,
  kBindFailed,
  kConnected,
  kConnectFailed,
  kResourceExhausted,
  kAccepted,
  kFlowReset,
  kFlowClosed,
  kSendFailed,
};

struct ControlEvent {
  EventKind kind = EventKind::kListening;
  std::uint64_t request_id = 0;
  FlowHandle flow;
  std::uint32_t attempts = 0;
  VirtualTime at;
};

/// "Signal after enqueue, recheck before sleeping." The waiter registers
/// itself, then re-evaluates its predicate under the lock; the signaller
/// publishes, then notifies if anyone is registered.
class Wakeup {
 public:
  void signal();

  struct WaitResult {
    bool ready = false;
    std::uint32_t sleeps = 0;         // times the caller actually blocked
    std::uint32_t empty_wakeups = 0;  // woke up to find nothing
  };

  /// Blocks until `ready()` holds or the deadline passes (nullopt: no deadline).
  WaitResult wait(const std::function<bool()>& ready,
                  std::optional<std::chrono::steady_clock::time_point> deadline);

  std::uint64_t signals() const { return signals_.load(std::memory_order_relaxed); }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::atomic<int> waiters_{0};
  std::atomic<std::uint64_t> signals_{0};
};

struct ChannelCounters {
  std::atomic<std::uint64_t> tx_enqueued{0};
  std::atomic<std::uint64_t> tx_dequeued{0};
  std::atomic<std::uint64_t> rx_enqueued{0};
  std::atomic<std::uint64_t> rx_dequeued{0};
  std::atomic<std::uint64_t> tx_blocked{0};  // sends that had to wait for space
};

/// Shared between one application thread and one engine. Each queue has
/// exactly one producer and one consumer.
class Channel {
 public:
  Channel(QueueId owner_engine, std::uint32_t app_id, std::size_t capacity = kChannelCapacity);

  QueueId owner_engine() const { return owner_; }
  std::uint32_t app_id() const { return app_id_; }

  SpscRing<Message>& tx() { return tx_; }            // app -> engine
  SpscRing<Message>& rx() { return rx_; }            // engine -> app
  SpscRing<ControlRequest>& requests() { return requests_; }  // app -> engine
  SpscRing<ControlEvent>& events() { return events_; }        // engine -> app
  Wakeup& wakeup() { return wakeup_; }
  Wakeup& space() { return space_; }  // engine signals the app when tx frees up
  ChannelCounters& counters() { return counters_; }
  const ChannelCounters& counters() const { return counters_; }

  /// Shared-nothing audit: records the engine touching the channel. Any engine
  /// other than the owner counts as a violation.
  void note_engine_touch(QueueId engine) {
    if (engine != owner_) foreign_touches_.fetch_add(1, std::memory_order_relaxed);
  }
  std::uint64_t foreign_touches() const { return foreign_touches_.load(std::memory_order_relaxed); }

 private:
  QueueId owner_;
  std::uint32_t app_id_;
  SpscRing<Message> tx_;
  SpscRing<Message> rx_;
  SpscRing<ControlRequest> requests_;
  SpscRing<ControlEvent> events_;
  Wakeup wakeup_;
  Wakeup space_;
  ChannelCounters counters_;
  std::atomic<std::uint64_t> foreign_touches_{0};
};

}  // namespace lcdnet
