#include "lcdnet/net_types.hpp"

#include <charconv>

#include "lcdnet/errors.hpp"
#include "lcdnet/lcd_nic.hpp"

namespace lcdnet {

Ipv4Addr Ipv4Addr::parse(std::string_view dotted) {
  std::uint32_t value = 0;
  const char* p = dotted.data();
  const char* end = p + dotted.size();
  for (int octet = 0; octet < 4; ++octet) {
    unsigned part = 0;
    auto [next, ec] = std::from_chars(p, end, part);
    if (ec != std::errc{} || next == p || part > 255) {
      throw Error(Errc::kArgument, "invalid IPv4 address '" + std::string(dotted) + "'");
    }
    value = (value << 8) | part;
    p = next;
    if (octet < 3) {
      if (p == end || *p != '.') throw Error(Errc::kArgument, "invalid IPv4 address '" + std::string(dotted) + "'");
      ++p;
    }
  }
  if (p != end) throw Error(Errc::kArgument, "invalid IPv4 address '" + std::string(dotted) + "'");
  return Ipv4Addr{value};
}

std::string Ipv4Addr::to_string() const {
  return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xff) + "." +
         std::to_string((value >> 8) & 0xff) + "." + std::to_string(value & 0xff);
}

void NicConfig::validate() const {
  if (queue_depth != kNicQueueDepth) {
    throw Error(Errc::kArgument, "queue depth must be 256 descriptors, got " + std::to_string(queue_depth));
  }
  if (num_queues < 1 || num_queues > max_queues) {
    throw Error(Errc::kArgument, "num_queues must be in [1, " + std::to_string(max_queues) + "], got " +
                                     std::to_string(num_queues));
  }
  if (mtu != kEthernetMtu) throw Error(Errc::kArgument, "only the 1514-octet Ethernet MTU is supported");
}

}  // namespace lcdnet
