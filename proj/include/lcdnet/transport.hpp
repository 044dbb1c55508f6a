#pragma once

// Reliable, message-preserving transport over the handshake-chosen UDP pairs.
// Per-packet sequence numbers starting at 1, fixed 1408-byte fragments, a
// static 64-packet window, cumulative ACKs plus up to 8 SACK ranges, fast
// retransmit on the third SACK reporting a hole, and an exponential RTO.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/net_types.hpp"
#include "lcdnet/time.hpp"
#include "lcdnet/wire.hpp"

namespace lcdnet {

struct TransportConfig {
  std::uint32_t window = 64;
  VirtualDuration rto_base = std::chrono::milliseconds(10);
  VirtualDuration rto_max = std::chrono::seconds(1);
  std::uint32_t max_retransmits = 16;
  bool sack_enabled = true;
  std::uint32_t ack_every = 2;
  VirtualDuration ack_delay = std::chrono::microseconds(100);
  std::uint32_t fast_retransmit_threshold = 3;
};

struct SeqRange {
  std::uint32_t start = 0;
  std::uint32_t end = 0;  // exclusive
  friend bool operator==(const SeqRange&, const SeqRange&) = default;
};

struct SackBlock {
  static constexpr std::size_t kMaxRanges = 8;
  std::vector<SeqRange> ranges;

  std::vector<std::uint8_t> encode() const;
  /// nullopt if malformed: more than 8 ranges, empty, overlapping, or unordered.
  static std::optional<SackBlock> decode(std::span<const std::uint8_t> payload);
};

/// Flow identity from the local side: remote address plus Machnet ports.
struct FlowKey {
  Ipv4Addr remote_ip;
  std::uint16_t local_port = 0;
  std::uint16_t remote_port = 0;

  friend constexpr auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{k.remote_ip.value} << 32) |
                                      (std::uint64_t{k.local_port} << 16) | k.remote_port);
  }
};

struct FlowCounters {
  // Sender.
  std::uint64_t messages_queued = 0;
  std::uint64_t fragments_first_sent = 0;
  std::uint64_t fragments_retransmitted = 0;
  std::uint64_t fragments_acked = 0;
  std::uint64_t fast_retransmits = 0;
  std::uint64_t rto_fired = 0;
  std::uint64_t acks_received = 0;
  std::uint64_t protocol_errors = 0;
  // Receiver.
  std::uint64_t data_received = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t out_of_window = 0;
  std::uint64_t acks_sent = 0;
  std::uint64_t sacks_sent = 0;
  std::uint64_t messages_delivered = 0;
};

struct DeliveredMessage {
  std::uint32_t msg_id = 0;
  std::vector<std::uint8_t> payload;
};

/// Number of fragments a payload of `len` bytes occupies.
constexpr std::size_t fragment_count(std::size_t len) {
  return len == 0 ? 0 : (len + kFragmentPayload - 1) / kFragmentPayload;
}

/// Per-connection transport state. Engine-local; not thread-safe.
class FlowState {
 public:
  FlowState(Ipv4Addr local_ip, FlowKey key, UdpPortPair tx_udp, UdpPortPair rx_udp, QueueId engine,
            TransportConfig config, bool port_echo);

  const FlowKey& key() const { return key_; }
  UdpPortPair tx_udp() const { return tx_udp_; }
  UdpPortPair rx_udp() const { return rx_udp_; }
  QueueId engine() const { return engine_; }
  const TransportConfig& config() const { return config_; }

  /// Queues a message; fragments go out from transmit(). Returns its msg_id.
  /// Throws Error(kSize) for empty or > 8 MiB payloads, Error(kState) after a reset.
  std::uint32_t send_message(std::vector<std::uint8_t> payload);

  /// Emits fragments while the window allows; returns how many were emitted.
  std::size_t transmit(VirtualTime now, std::vector<Frame>& out);

  /// Handles one DATA packet. In-order complete messages are appended to
  /// `delivered`; ACK/SACK frames (immediate or owed) go to `out`.
  void on_data(const Packet& pkt, VirtualTime now, std::vector<Frame>& out,
               std::vector<DeliveredMessage>& delivered);

  /// Handles ACK or SACK; fast retransmissions go to `out`.
  void on_ack(const Packet& pkt, VirtualTime now, std::vector<Frame>& out);

  /// Retransmits the oldest unacked fragment and backs off. Returns false when
  /// the retransmit cap is exceeded and the flow must be reset.
  bool on_rto(VirtualTime now, std::vector<Frame>& out);

  /// Fires whatever is due (delayed ACK, RTO). False means reset.
  bool on_timers(VirtualTime now, std::vector<Frame>& out);
  std::optional<VirtualTime> next_deadline() const;

  bool has_unsent() const { return !tx_queue_.empty(); }
  bool idle() const { return tx_queue_.empty() && unacked_.empty(); }
  bool can_send() const;
  bool reset() const { return reset_; }
  bool port_echo_pending() const { return port_echo_; }

  std::size_t unacked_count() const { return unacked_.size(); }
  std::uint32_t next_tx_seq() const { return next_tx_seq_; }
  std::uint32_t highest_cum_ack() const { return snd_una_; }
  std::uint32_t rx_next_expected() const { return rx_next_; }
  VirtualDuration rto() const { return rto_; }
  std::optional<VirtualTime> rto_deadline() const { return rto_deadline_; }
  SackBlock current_sack() const;
  const FlowCounters& counters() const { return counters_; }

  /// fragments_first_sent == fragments_acked + unacked.
  bool counters_balanced() const {
    return counters_.fragments_first_sent == counters_.fragments_acked + unacked_.size();
  }

 private:
  struct TxEntry {
    Frame frame;
    VirtualTime sent_at;
    std::uint32_t retransmits = 0;
    std::uint32_t hole_reports = 0;
    std::uint32_t resent_below = 0;  // next_tx_seq at the last resend
  };
  struct TxMessage {
    std::uint32_t msg_id = 0;
    std::vector<std::uint8_t> payload;
    std::size_t offset = 0;
  };
  struct Reassembly {
    std::vector<std::uint8_t> buffer;
    std::size_t received = 0;
  };

  Frame make_frame(const MachnetHeader& h, std::span<const std::uint8_t> payload) const;
  void send_ack(VirtualTime now, std::vector<Frame>& out);
  void retransmit(TxEntry& entry, VirtualTime now, std::vector<Frame>& out);
  void acked(std::map<std::uint32_t, TxEntry>::iterator it);

  Ipv4Addr local_ip_;
  FlowKey key_;
  UdpPortPair tx_udp_;
  UdpPortPair rx_udp_;
  QueueId engine_;
  TransportConfig config_;
  bool port_echo_;
  bool reset_ = false;

  // Sender.
  std::uint32_t next_msg_id_ = 1;
  std::uint32_t next_tx_seq_ = 1;
  std::uint32_t snd_una_ = 1;
  std::deque<TxMessage> tx_queue_;
  std::map<std::uint32_t, TxEntry> unacked_;
  VirtualDuration rto_;
  std::optional<VirtualTime> rto_deadline_;

  // Receiver.
  std::uint32_t rx_next_ = 1;
  std::set<std::uint32_t> rx_out_of_order_;
  std::map<std::uint32_t, Reassembly> reassembly_;
  std::map<std::uint32_t, std::vector<std::uint8_t>> completed_;
  std::uint32_t next_release_msg_id_ = 1;
  std::uint32_t owed_acks_ = 0;
  std::optional<VirtualTime> ack_deadline_;

  FlowCounters counters_;
};

}  // namespace lcdnet
