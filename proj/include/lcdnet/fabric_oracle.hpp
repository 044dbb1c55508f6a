#pragma once

// Verification-only access to the fabric's hidden RSS state. Used by tests and
// by the bench harness's post-run audits; stack code never includes this.

#include <span>

#include "lcdnet/fabric.hpp"

namespace lcdnet {

class FabricOracle {
 public:
  explicit FabricOracle(const Fabric& fabric) : fabric_(fabric) {}

  const RssKey& rss_key() const;
  std::span<const std::uint16_t> indirection_table(HostId host) const;
  bool hash_byteswap() const;

  /// indirection_table[hash mod 128] of the destination host.
  QueueId steer(HostId host, const FourTuple& tuple) const;
  /// Frame-level steering; frames that are not IPv4/UDP go to queue 0.
  QueueId steer(const Frame& frame, HostId host) const;

 private:
  const Fabric& fabric_;
};

}  // namespace lcdnet
