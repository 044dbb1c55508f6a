#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "lcdnet/fabric.hpp"
#include "lcdnet/spsc_ring.hpp"

namespace lcdnet {

class SimNic final : public Nic {
 public:
  SimNic(HostId id, NicConfig config);

  std::size_t tx_burst(QueueId queue, std::span<Frame> frames) override;
  std::vector<Frame> rx_burst(QueueId queue, std::size_t max) override;
  std::size_t num_queues() const override { return config_.num_queues; }
  const NicConfig& config() const override { return config_; }

  HostId id() const { return id_; }
  SpscRing<Frame>& rx_ring(std::size_t q) { return *rx_[q]; }
  SpscRing<Frame>& tx_ring(std::size_t q) { return *tx_[q]; }
  const SpscRing<Frame>& rx_ring(std::size_t q) const { return *rx_[q]; }
  QueueStats& stats(std::size_t q) { return stats_[q]; }

 private:
  void check(QueueId queue) const;

  HostId id_;
  NicConfig config_;
  std::vector<std::unique_ptr<SpscRing<Frame>>> rx_;
  std::vector<std::unique_ptr<SpscRing<Frame>>> tx_;
  std::vector<QueueStats> stats_;
};

/// Byte-at-a-time Toeplitz evaluation for a fixed key.
class ToeplitzTable {
 public:
  explicit ToeplitzTable(const RssKey& key);
  std::uint32_t hash(const FourTuple& tuple) const;

 private:
  std::array<std::array<std::uint32_t, 256>, 12> table_{};
};

struct Fabric::Impl {
  using EventKey = std::pair<std::int64_t, std::uint64_t>;
  struct Event {
    std::optional<Frame> frame;
    std::function<void()> callback;
  };
  struct Stream {
    std::mt19937_64 rng;
    std::optional<EventKey> last;
  };

  explicit Impl(FabricConfig cfg);

  void send_from(HostId src, std::size_t stream, Frame frame);
  void deliver(Frame frame);
  QueueId steer(HostId host, const FourTuple& tuple) const;

  FabricConfig config;
  RssKey key{};
  ToeplitzTable toeplitz;
  VirtualClock clock;
  std::vector<std::unique_ptr<SimNic>> hosts;
  std::vector<std::vector<std::uint16_t>> tables;
  std::map<std::uint32_t, HostId> by_ip;
  std::vector<std::vector<Stream>> streams;  // [host][queue], plus one per host for direct sends
  std::map<EventKey, Event> events;
  std::uint64_t next_seq = 0;
  FabricStats stats;
  std::function<bool(const Frame&)> drop_filter;
};

}  // namespace lcdnet
