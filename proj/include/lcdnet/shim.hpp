#pragma once

// Application-side library: sockets-like calls over a channel.
//   init    -> Shim::init
//   attach  -> Shim::attach
//   bind / listen, connect, send, recv, close -> AppChannel
// Blocking calls either sleep on the channel's wakeup (threaded runtime) or,
// in deterministic mode, drive the simulation through the pump callback.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>

#include "lcdnet/channel.hpp"
#include "lcdnet/engine.hpp"
#include "lcdnet/errors.hpp"

namespace lcdnet {

/// Drives a deterministic simulation for a blocked caller: settles the current
/// instant, stops there if `ready()` holds, otherwise moves to the next event
/// but never past `until`. False when nothing is left to happen.
using PumpFn = std::function<bool(const std::function<bool()>& ready, std::optional<VirtualTime> until)>;

enum class RecvMode : std::uint8_t { kNonBlocking, kBlocking };

struct ConnectOutcome {
  bool ok = false;
  FlowHandle flow;
  std::uint32_t attempts = 0;
  Errc error = Errc::kConnect;
  VirtualTime at;  // when the engine settled the handshake
};

namespace detail {
struct ShimContext {
  Sidecar* sidecar = nullptr;
  PumpFn pump;
  std::atomic<std::uint64_t> next_request_id{1};
};
}  // namespace detail

class AppChannel {
 public:
  AppChannel(std::shared_ptr<Channel> channel, std::shared_ptr<detail::ShimContext> ctx);
  AppChannel(AppChannel&&) noexcept = default;
  AppChannel& operator=(AppChannel&&) noexcept = default;

  QueueId engine() const { return channel_->owner_engine(); }
  std::uint32_t app_id() const { return channel_->app_id(); }
  Channel& channel() { return *channel_; }

  /// Throws Error(kBind) if the port already has a listener on this host.
  void listen(std::uint16_t port, std::optional<VirtualDuration> timeout = {});
  void bind(std::uint16_t port) { listen(port); }

  std::uint64_t connect_async(Ipv4Addr remote_ip, std::uint16_t remote_port);
  std::optional<ConnectOutcome> poll_connect(std::uint64_t ticket);
  /// Blocks until Established; throws ConnectError with the attempt count.
  FlowHandle connect(Ipv4Addr remote_ip, std::uint16_t remote_port,
                     std::optional<VirtualDuration> timeout = {});

  /// Copies the payload into the channel, blocking while it is full.
  /// Throws Error(kSize) / Error(kFlow).
  void send(FlowHandle flow, std::span<const std::uint8_t> payload);
  bool try_send(FlowHandle flow, std::span<const std::uint8_t> payload);

  /// Non-blocking returns at once. Blocking sleeps until a message arrives or
  /// the timeout elapses; nullopt then means timeout, not an error.
  std::optional<Message> recv(RecvMode mode, std::optional<VirtualDuration> timeout = {});

  void close(FlowHandle flow);

  /// Notifications not consumed by a blocking call (accepted flows, resets...).
  std::vector<ControlEvent> take_events();
  bool flow_alive(FlowHandle flow) const { return !dead_flows_.contains(flow.pack()); }

  struct RecvStats {
    std::uint64_t sleeps = 0;
    std::uint64_t empty_wakeups = 0;
    std::uint64_t empty_polls = 0;
  };
  const RecvStats& recv_stats() const { return stats_; }

 private:
  void drain_events();
  bool wait_until(const std::function<bool()>& ready, Wakeup& wakeup,
                  std::optional<VirtualDuration> timeout, bool count_recv);
  void submit(ControlRequest req);
  void check_send(FlowHandle flow, std::span<const std::uint8_t> payload);

  std::shared_ptr<Channel> channel_;
  std::shared_ptr<detail::ShimContext> ctx_;
  std::unordered_map<std::uint64_t, ConnectOutcome> connects_;
  std::unordered_map<std::uint64_t, EventKind> listens_;
  std::unordered_set<std::uint64_t> dead_flows_;
  std::deque<ControlEvent> events_;
  RecvStats stats_;
};

class Shim {
 public:
  Shim() = default;

  void init(Sidecar& sidecar, PumpFn pump = {});
  bool initialized() const { return ctx_ != nullptr; }
  /// Throws Error(kState) before init, Error(kArgument) for a bad pin.
  AppChannel attach(EnginePolicy policy);
  void set_pump(PumpFn pump);

 private:
  std::shared_ptr<detail::ShimContext> ctx_;
};

}  // namespace lcdnet
