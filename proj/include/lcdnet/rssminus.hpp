#pragma once

// RSS--: flow-to-engine affinity on both hosts without knowing the RSS key.
// The client sprays SYNs over random UDP port pairs; whichever lands on the
// server's target engine is answered; whichever SYN-ACK lands on the client's
// initiating engine completes the handshake. The chosen pairs are echoed so
// that each side sends on a pair known to steer to the peer's engine.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/net_types.hpp"
#include "lcdnet/time.hpp"
#include "lcdnet/wire.hpp"

namespace lcdnet {

enum class SprayMode : std::uint8_t { kNaive = 0, kOptimized = 1 };

enum class HandshakePhase : std::uint8_t { kIdle, kSynSent, kSynAckSent, kEstablished, kFailed };

/// SYNs needed so that one lands right on both ends with probability >= p,
/// assuming n engines per side: ceil(log(1-p) / log(1 - 1/n^2)); 1 when n = 1.
/// Throws Error(kArgument) unless 0 < p < 1 and n >= 1.
std::uint32_t required_batch_naive(std::uint32_t engines, double p);

struct OptimizedBatch {
  std::uint32_t per_side = 1;          // ceiling, used when spraying
  double exact_per_side = 1.0;         // log(1-sqrt(p)) / log(1 - 1/n)
  std::uint32_t total_floor_doubled = 2;  // floor(2 * exact)
};

/// Per-side packet count when SYN and SYN-ACK are sprayed independently.
OptimizedBatch required_batch_optimized(std::uint32_t engines, double p);

/// first * 2^(attempt-1), capped.
std::uint32_t batch_for_attempt(std::uint32_t first, std::uint32_t attempt, std::uint32_t cap);

struct HandshakeConfig {
  SprayMode mode = SprayMode::kOptimized;
  double target_probability = 0.95;
  VirtualDuration retry_timeout = std::chrono::milliseconds(300);
  std::uint32_t max_attempts = 8;
  std::uint32_t batch_cap = 4096;
  std::uint16_t udp_port_min = 32768;
  std::uint16_t udp_port_max = 60999;
  VirtualDuration half_open_timeout = std::chrono::seconds(3);
};

/// Handshake identity from the local side's point of view.
struct HandshakeKey {
  Ipv4Addr remote_ip;
  MachnetPortPair ports;

  static HandshakeKey from_incoming(const Packet& pkt) {
    return {pkt.tuple.src_ip, {pkt.header.dst_port, pkt.header.src_port}};
  }
  friend constexpr auto operator<=>(const HandshakeKey&, const HandshakeKey&) = default;
};

struct HandshakeKeyHash {
  std::size_t operator()(const HandshakeKey& k) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{k.remote_ip.value} << 32) |
                                      (std::uint64_t{k.ports.local} << 16) | k.ports.remote);
  }
};

/// Client-side handshake record.
struct HandshakeState {
  HandshakePhase phase = HandshakePhase::kIdle;
  SprayMode mode = SprayMode::kOptimized;
  QueueId target_local_engine;
  std::optional<QueueId> target_remote_engine;
  Ipv4Addr remote_ip;
  MachnetPortPair ports;
  std::unordered_set<UdpPortPair> sprayed_pairs;
  std::uint32_t attempt = 0;
  std::uint32_t batch_size = 0;
  std::vector<std::uint32_t> batch_history;
  VirtualTime started_at;
  VirtualTime retry_deadline;
  std::optional<UdpPortPair> chosen_tx_udp;
  std::optional<UdpPortPair> chosen_rx_udp;
};

/// Server-side half-open record, kept until the client's ACK (or first DATA).
struct ServerHandshake {
  HandshakePhase phase = HandshakePhase::kSynAckSent;
  SprayMode mode = SprayMode::kOptimized;
  Ipv4Addr remote_ip;
  MachnetPortPair ports;
  UdpPortPair accepted_syn;  // as seen on the wire, client -> server
  std::uint32_t last_attempt = 0;
  std::uint16_t client_engines = 1;
  std::uint32_t synack_batches = 0;
  VirtualTime started_at;
  VirtualTime expires_at;
  std::unordered_set<UdpPortPair> sprayed_pairs;
};

struct SynPayload {
  static constexpr std::size_t kSize = 8;
  std::uint16_t engines = 1;
  std::uint16_t attempt = 1;
  SprayMode mode = SprayMode::kOptimized;
};

struct SynAckPayload {
  static constexpr std::size_t kSize = 8;
  UdpPortPair accepted_syn;
  std::uint16_t server_engine = 0;
  std::uint16_t server_engines = 1;
};

std::array<std::uint8_t, SynPayload::kSize> encode(const SynPayload& p);
std::optional<SynPayload> decode_syn_payload(std::span<const std::uint8_t> in);
std::array<std::uint8_t, SynAckPayload::kSize> encode(const SynAckPayload& p);
std::optional<SynAckPayload> decode_synack_payload(std::span<const std::uint8_t> in);

/// Outcome of a completed handshake, handed to the transport.
struct Established {
  Ipv4Addr remote_ip;
  MachnetPortPair ports;
  UdpPortPair tx;  // pair this side sends on
  UdpPortPair rx;  // pair the peer sends on
  bool initiator = false;
  std::uint32_t attempts = 1;
  VirtualTime started_at;
  std::optional<QueueId> remote_engine;
};

struct HandshakeFailure {
  HandshakeKey key;
  std::uint32_t attempts = 0;
  VirtualTime started_at;
};

struct HandshakeStats {
  std::uint64_t syns_sent = 0;
  std::uint64_t synacks_sent = 0;
  std::uint64_t synack_batches = 0;
  std::uint64_t synacks_discarded = 0;
  std::uint64_t synacks_unknown = 0;
  std::uint64_t syn_duplicates = 0;
  std::uint64_t acks_sent = 0;
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;
  std::uint64_t established_client = 0;
  std::uint64_t established_server = 0;
  std::uint64_t half_open_reaped = 0;
  std::uint64_t malformed = 0;
};

/// Engine-local handshake machinery. Not thread-safe; owned by one engine.
class Handshaker {
 public:
  Handshaker(QueueId engine, std::uint32_t local_engines, Ipv4Addr local_ip, HandshakeConfig config,
             std::uint64_t seed);

  // Client side.
  const HandshakeState& initiate(Ipv4Addr remote_ip, MachnetPortPair ports, VirtualTime now,
                                 std::vector<Frame>& out);
  /// Establishes on the first SYN-ACK that reaches this (the initiating)
  /// engine; anything else is discarded.
  std::optional<Established> on_synack(const Packet& pkt, VirtualTime now, std::vector<Frame>& out);
  /// Re-sprays with a doubled batch, or fails the handshake after
  /// max_attempts. Returns true when the handshake failed.
  bool on_retry_timeout(HandshakeState& state, VirtualTime now, std::vector<Frame>& out);

  // Server side. The caller has checked that this engine is the listener's
  // target engine.
  enum class SynResult { kResponded, kAbsorbed, kMalformed };
  SynResult on_syn(const Packet& pkt, VirtualTime now, std::vector<Frame>& out);
  std::optional<Established> on_handshake_ack(const Packet& pkt);
  /// A DATA frame whose port echo completes a half-open handshake.
  std::optional<Established> on_port_echo(const Packet& pkt);

  std::optional<VirtualTime> next_deadline();
  std::vector<HandshakeFailure> on_timers(VirtualTime now, std::vector<Frame>& out);

  HandshakeState* client_state(const HandshakeKey& key);
  const ServerHandshake* server_state(const HandshakeKey& key) const;
  void abandon(const HandshakeKey& key);
  std::size_t in_progress() const { return clients_.size() + servers_.size(); }

  const HandshakeStats& stats() const { return stats_; }
  const HandshakeConfig& config() const { return config_; }
  std::uint32_t first_batch(std::uint32_t engines) const;

 private:
  struct Timer {
    VirtualTime at;
    HandshakeKey key;
    bool server = false;
    friend bool operator>(const Timer& a, const Timer& b) { return a.at > b.at; }
  };

  UdpPortPair fresh_pair(std::unordered_set<UdpPortPair>& used);
  void spray_syns(HandshakeState& state, std::vector<Frame>& out);
  void spray_synacks(ServerHandshake& hs, std::uint32_t count, std::vector<Frame>& out);
  Frame synack_frame(const ServerHandshake& hs, UdpPortPair pair) const;

  QueueId engine_;
  std::uint32_t local_engines_;
  Ipv4Addr local_ip_;
  HandshakeConfig config_;
  std::mt19937_64 rng_;
  std::unordered_map<HandshakeKey, HandshakeState, HandshakeKeyHash> clients_;
  std::unordered_map<HandshakeKey, ServerHandshake, HandshakeKeyHash> servers_;
  std::priority_queue<Timer, std::vector<Timer>, std::greater<>> timers_;
  HandshakeStats stats_;
};

}  // namespace lcdnet
