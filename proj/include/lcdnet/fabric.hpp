#pragma once

// Deterministic simulated datapath connecting the LCD NICs of several hosts.
// Steering is a genuine Toeplitz RSS over the UDP four-tuple; the key and the
// indirection tables stay inside the fabric (see fabric_oracle.hpp for the
// verification-only view).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>

#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/net_types.hpp"
#include "lcdnet/time.hpp"

namespace lcdnet {

using RssKey = std::array<std::uint8_t, 40>;
inline constexpr std::size_t kIndirectionTableSize = 128;

/// Toeplitz hash over src_ip | dst_ip | src_port | dst_port (network order).
std::uint32_t toeplitz_hash(const RssKey& key, const FourTuple& tuple);

struct FabricConfig {
  std::optional<RssKey> rss_key;  // derived from rng_seed when unset
  double loss_probability = 0.0;
  double reorder_probability = 0.0;
  VirtualDuration base_delay = std::chrono::microseconds(10);
  VirtualDuration delay_jitter = VirtualDuration::zero();
  std::uint64_t rng_seed = 1;
  bool hash_byteswap = false;

  void validate() const;
};

struct FabricStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_delivered = 0;
  std::uint64_t frames_lost = 0;  // probabilistic loss and injected drops
  std::uint64_t frames_dropped_ring_full = 0;
  std::uint64_t frames_dropped_unroutable = 0;
  std::uint64_t frames_reordered = 0;
  std::uint64_t frames_in_flight = 0;
  std::uint64_t callbacks_fired = 0;

  bool balanced() const {
    return frames_sent == frames_delivered + frames_lost + frames_dropped_ring_full +
                              frames_dropped_unroutable + frames_in_flight;
  }
};

struct QueueStats {
  std::uint64_t delivered = 0;
  std::uint64_t dropped_ring_full = 0;
  std::uint64_t transmitted = 0;
};

using HostId = std::size_t;

class Fabric {
 public:
  explicit Fabric(FabricConfig config);
  ~Fabric();
  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  /// Registers a host NIC; its IP must be unique. The returned NIC lives as
  /// long as the fabric.
  Nic& attach_host(const NicConfig& config);
  std::size_t host_count() const;
  std::optional<HostId> host_of(Ipv4Addr ip) const;
  Nic& nic(HostId host);

  VirtualClock& clock();
  VirtualTime now() const;

  /// Puts a frame on the wire from `src`: loss, delay, and reordering apply.
  void send(HostId src, Frame frame);
  /// Moves every frame waiting on any TX ring onto the wire.
  std::size_t flush_tx();

  /// Runs deliveries and callbacks due in [now, now + delta] in timestamp
  /// order, then sets now += delta. Returns the number of events executed.
  std::size_t advance(VirtualDuration delta);
  std::size_t advance_to(VirtualTime t);

  void schedule(VirtualTime at, std::function<void()> callback);
  std::optional<VirtualTime> next_event_time() const;

  bool rx_pending(HostId host, QueueId queue) const;
  const FabricStats& stats() const;
  const QueueStats& queue_stats(HostId host, QueueId queue) const;

  /// Fault injection: frames for which the filter returns true are lost.
  void set_drop_filter(std::function<bool(const Frame&)> filter);
  /// Places a frame straight onto an RX ring, bypassing RSS. False when full.
  bool inject(HostId host, QueueId queue, Frame frame);

  struct Impl;

 private:
  friend class FabricOracle;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lcdnet
