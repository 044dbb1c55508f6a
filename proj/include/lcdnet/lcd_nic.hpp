#pragma once

// Least-common-denominator cloud vNIC: Ethernet frames in and out of a fixed
// number of 256-descriptor queue pairs, steered by an RSS function the guest can
// neither read nor configure. Nothing else is offered.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lcdnet/net_types.hpp"

namespace lcdnet {

inline constexpr std::size_t kNicQueueDepth = 256;
inline constexpr std::size_t kEthernetMtu = 1514;
inline constexpr std::size_t kEthernetHeaderLen = 14;

using MacAddr = std::array<std::uint8_t, 6>;

class Frame {
 public:
  Frame() = default;
  explicit Frame(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  std::span<const std::uint8_t> bytes() const { return bytes_; }
  std::span<std::uint8_t> mutable_bytes() { return bytes_; }
  std::size_t size() const { return bytes_.size(); }

  bool fits_mtu(std::size_t mtu = kEthernetMtu) const {
    return bytes_.size() >= kEthernetHeaderLen && bytes_.size() <= mtu;
  }

 private:
  std::vector<std::uint8_t> bytes_;
};

class QueueId {
 public:
  constexpr QueueId() = default;
  constexpr explicit QueueId(std::uint16_t index) : index_(index) {}

  constexpr std::uint16_t index() const { return index_; }

  friend constexpr auto operator<=>(const QueueId&, const QueueId&) = default;

 private:
  std::uint16_t index_ = 0;
};

struct NicConfig {
  std::size_t num_queues = 1;
  std::size_t queue_depth = kNicQueueDepth;
  std::size_t mtu = kEthernetMtu;
  MacAddr local_mac{0x02, 0, 0, 0, 0, 1};
  Ipv4Addr local_ip;
  std::size_t max_queues = 64;  // core-count analog of the host

  /// Throws Error(kArgument); queue_depth other than 256 is rejected.
  void validate() const;
};

/// The only network surface visible to the stack. There is intentionally no
/// way to read or program RSS, install flow rules, coalesce descriptors, or
/// register DMA memory.
class Nic {
 public:
  virtual ~Nic() = default;

  /// Moves the accepted prefix of `frames` onto the queue's TX ring and returns
  /// its length. Stops at a full ring or at the first frame outside the MTU.
  /// Throws Error(kArgument) for an invalid queue.
  virtual std::size_t tx_burst(QueueId queue, std::span<Frame> frames) = 0;

  /// Removes and returns up to `max` frames from the queue's RX ring, FIFO.
  virtual std::vector<Frame> rx_burst(QueueId queue, std::size_t max) = 0;

  virtual std::size_t num_queues() const = 0;
  virtual const NicConfig& config() const = 0;
};

}  // namespace lcdnet
