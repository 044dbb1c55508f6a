#pragma once

// Sidecar engines: one per NIC queue pair, each running a run-to-completion
// loop over its own RX queue, its bound channels, and its timers. Engines share
// nothing except the NIC object (disjoint queues) and the host's listener
// registry, which replicates listener entries into every engine.

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "lcdnet/channel.hpp"
#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/rssminus.hpp"
#include "lcdnet/time.hpp"
#include "lcdnet/transport.hpp"

namespace lcdnet {

struct EnginePolicy {
  enum class Kind : std::uint8_t { kRoundRobin, kPinned };
  Kind kind = Kind::kRoundRobin;
  QueueId pinned;

  static EnginePolicy round_robin() { return {}; }
  static EnginePolicy pin(QueueId engine) { return {Kind::kPinned, engine}; }
};

/// Virtual time an engine spends per unit of work. Only the deterministic
/// driver consumes it; the threaded runtime runs on real time.
struct CostModel {
  VirtualDuration per_rx_frame = std::chrono::nanoseconds(300);
  VirtualDuration per_tx_frame = std::chrono::nanoseconds(300);
  VirtualDuration per_app_message = std::chrono::nanoseconds(200);
};

struct EngineConfig {
  std::size_t burst = 32;
  VirtualDuration ctrl_poll_interval = std::chrono::microseconds(50);
  HandshakeConfig handshake;
  TransportConfig transport;
  CostModel cost;
  std::uint16_t ephemeral_port_min = 16384;
  std::uint16_t ephemeral_port_max = 65535;
  VirtualDuration fin_timeout = std::chrono::milliseconds(300);
  std::uint32_t fin_attempts = 3;
};

struct EngineStats {
  std::uint64_t iterations = 0;
  std::uint64_t frames_rx = 0;
  std::uint64_t frames_tx = 0;
  std::uint64_t frames_malformed = 0;
  std::uint64_t drops_unknown_flow = 0;
  std::uint64_t drops_cross_engine = 0;
  std::uint64_t drops_no_listener = 0;
  std::uint64_t syn_wrong_engine = 0;
  std::uint64_t duplicate_syns = 0;
  std::uint64_t late_synacks = 0;
  std::uint64_t messages_from_app = 0;
  std::uint64_t messages_to_app = 0;
  std::uint64_t send_failures = 0;
  std::uint64_t flows_established = 0;
  std::uint64_t flows_reset = 0;
  std::uint64_t flows_closed = 0;
  std::uint64_t connect_failures = 0;
  std::uint64_t port_exhausted = 0;
  std::uint64_t tx_backlog_high_water = 0;
};

/// Transport counters summed over every flow the engine has ever owned.
struct TransportTotals {
  std::uint64_t fragments_first_sent = 0;
  std::uint64_t fragments_retransmitted = 0;
  std::uint64_t fragments_acked = 0;
  std::uint64_t fragments_unacked = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t rto_fired = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t out_of_window = 0;
  std::uint64_t protocol_errors = 0;
  std::uint64_t messages_delivered = 0;

  void add(const FlowCounters& c, std::size_t unacked);
  bool balanced() const { return fragments_first_sent == fragments_acked + fragments_unacked; }
};

struct FlowAudit {
  FlowKey key;
  QueueId engine;
  UdpPortPair tx;
  UdpPortPair rx;
  bool initiator = false;
  std::uint32_t handshake_attempts = 0;
};

/// Host-wide listener table. Registration is checked for duplicates here and
/// then replicated into each engine's inbox; engines read only their replica.
class ListenerRegistry {
 public:
  struct Update {
    bool add = true;
    std::uint16_t port = 0;
    QueueId target;
    std::shared_ptr<Channel> channel;  // set only in the target engine's copy
  };

  explicit ListenerRegistry(std::size_t engines);

  bool try_register(std::uint16_t port, QueueId target, std::shared_ptr<Channel> channel);
  void unregister(std::uint16_t port);
  bool is_listening(std::uint16_t port) const;
  std::vector<Update> drain(QueueId engine);
  bool has_updates(QueueId engine) const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::uint16_t, QueueId> ports_;
  std::vector<std::vector<Update>> inboxes_;
  std::unique_ptr<std::atomic<bool>[]> pending_;
};

class Engine {
 public:
  Engine(QueueId id, std::size_t engine_count, Nic& nic, const VirtualClock& clock,
         ListenerRegistry& listeners, EngineConfig config, std::uint64_t seed);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  QueueId id() const { return id_; }

  /// One pass of the loop: (1) up to `burst` RX frames, (2) up to `burst`
  /// messages from each bound channel, (3) due timers, (4) connect/listen
  /// requests on the 50 us control interval. Returns items processed.
  std::size_t run_iteration();

  /// Thread-safe handoff; the loop adopts the channel on its next iteration.
  void bind_channel(std::shared_ptr<Channel> channel);
  /// Channels bound so far, including ones not yet picked up by the loop.
  std::size_t channel_count() const;

  std::optional<VirtualTime> next_deadline();
  bool has_pending_work() const;
  VirtualDuration last_iteration_cost() const { return last_cost_; }

  const EngineStats& stats() const { return stats_; }
  const HandshakeStats& handshake_stats() const { return handshaker_.stats(); }
  TransportTotals transport_totals() const;
  std::vector<FlowAudit> audit_flows() const;
  const FlowState* find_flow(const FlowKey& key) const;
  std::size_t flow_count() const { return flows_.size(); }
  std::size_t pending_to_app() const;
  std::uint64_t foreign_flow_touches() const { return foreign_flow_touches_; }
  std::size_t channel_rx_high_water() const;
  std::size_t channel_tx_high_water() const;

 private:
  struct Flow {
    FlowState state;
    std::shared_ptr<Channel> channel;
    bool initiator = false;
    std::uint32_t attempts = 1;
    bool closing = false;
    bool fin_sent = false;
    std::uint32_t fin_attempts = 0;
    std::optional<VirtualTime> fin_deadline;
    std::optional<VirtualTime> timer_at;
  };
  struct FlowTimer {
    VirtualTime at;
    FlowKey key;
    friend bool operator>(const FlowTimer& a, const FlowTimer& b) { return a.at > b.at; }
  };
  struct PendingConnect {
    std::shared_ptr<Channel> channel;
    std::uint64_t request_id = 0;
  };
  struct ListenerEntry {
    QueueId target;
    std::shared_ptr<Channel> channel;
  };
  struct BoundChannel {
    std::shared_ptr<Channel> channel;
    std::deque<Message> overflow;  // completed messages waiting for rx space
    std::deque<ControlEvent> event_overflow;
  };

  void apply_listener_updates();
  void process_frame(const Frame& frame, VirtualTime now);
  void on_syn(const Packet& pkt, VirtualTime now);
  void on_synack(const Packet& pkt, VirtualTime now);
  void on_ack(const Packet& pkt, VirtualTime now);
  void on_data(const Packet& pkt, VirtualTime now);
  void on_fin(const Packet& pkt, bool fin_ack, VirtualTime now);
  void maybe_fin(Flow& flow, VirtualTime now);
  void send_fin(Flow& flow, VirtualTime now);
  void adopt_channels();
  void drop_unmatched(std::uint16_t local_port);
  bool owned_elsewhere(std::uint16_t local_port) const;
  std::size_t drain_channel(BoundChannel& bound, VirtualTime now);
  void handle_request(BoundChannel& bound, const ControlRequest& req, VirtualTime now);
  std::size_t fire_timers(VirtualTime now);
  void establish(const Established& est, std::shared_ptr<Channel> channel, std::uint64_t request_id);
  void reset_flow(const FlowKey& key, EventKind why);
  void retire(std::unordered_map<FlowKey, Flow, FlowKeyHash>::iterator it);
  void sync_timer(const FlowKey& key, Flow& flow);
  void deliver(Flow& flow, std::vector<DeliveredMessage>& delivered);
  std::size_t flush_deliveries();
  std::size_t transmit_flows(VirtualTime now);
  std::size_t flush_tx();
  void post_event(const std::shared_ptr<Channel>& channel, ControlEvent ev);
  BoundChannel* bound(const std::shared_ptr<Channel>& channel);
  std::optional<std::uint16_t> allocate_port(Ipv4Addr remote_ip, std::uint16_t remote_port);
  bool in_partition(std::uint16_t port) const;
  std::optional<QueueId> partition_owner(std::uint16_t port) const;
  void touch(Flow& flow);

  QueueId id_;
  std::size_t engine_count_;
  Nic& nic_;
  const VirtualClock& clock_;
  ListenerRegistry& registry_;
  EngineConfig config_;
  Handshaker handshaker_;

  std::vector<BoundChannel> channels_;
  std::unordered_map<std::uint16_t, ListenerEntry> listeners_;
  std::unordered_map<FlowKey, Flow, FlowKeyHash> flows_;
  std::unordered_map<HandshakeKey, PendingConnect, HandshakeKeyHash> pending_connects_;
  std::priority_queue<FlowTimer, std::vector<FlowTimer>, std::greater<>> flow_timers_;
  std::unordered_map<FlowKey, bool, FlowKeyHash> active_tx_;
  std::deque<Frame> tx_backlog_;
  std::vector<Frame> scratch_out_;
  std::uint32_t next_port_cursor_ = 0;
  mutable std::mutex bind_mu_;
  std::vector<std::shared_ptr<Channel>> pending_binds_;
  std::atomic<bool> has_binds_{false};
  VirtualTime next_ctrl_poll_{};
  VirtualDuration last_cost_{};
  std::size_t iter_tx_frames_ = 0;
  TransportTotals retired_;
  std::uint64_t foreign_flow_touches_ = 0;
  EngineStats stats_;
};

struct SidecarConfig {
  std::size_t engines = 1;
  EngineConfig engine;
  std::uint64_t seed = 1;
};

/// The per-host stack process: engines plus channel assignment.
class Sidecar {
 public:
  Sidecar(Nic& nic, const VirtualClock& clock, SidecarConfig config);

  std::size_t engine_count() const { return engines_.size(); }
  Engine& engine(std::size_t i) { return *engines_.at(i); }
  const Engine& engine(std::size_t i) const { return *engines_.at(i); }
  ListenerRegistry& listeners() { return registry_; }
  const VirtualClock& clock() const { return clock_; }
  Ipv4Addr ip() const { return nic_.config().local_ip; }

  struct Assignment {
    QueueId engine;
    std::shared_ptr<Channel> channel;
  };
  /// Round-robin gives the k-th attachment engine k mod n. Throws
  /// Error(kArgument) for a pinned engine out of range.
  Assignment assign_channel(EnginePolicy policy);

  const std::vector<std::shared_ptr<Channel>>& channels() const { return all_channels_; }

 private:
  Nic& nic_;
  const VirtualClock& clock_;
  ListenerRegistry registry_;
  std::vector<std::unique_ptr<Engine>> engines_;
  std::mutex mu_;
  std::uint64_t attachments_ = 0;
  std::vector<std::shared_ptr<Channel>> all_channels_;
};

}  // namespace lcdnet
