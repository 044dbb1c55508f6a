#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace lcdnet {

struct Ipv4Addr {
  std::uint32_t value = 0;  // host byte order

  static constexpr Ipv4Addr from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
    return Ipv4Addr{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
  }
  /// Throws Error(kArgument) on anything but a dotted quad.
  static Ipv4Addr parse(std::string_view dotted);
  std::string to_string() const;

  friend constexpr auto operator<=>(const Ipv4Addr&, const Ipv4Addr&) = default;
};

/// UDP ports as they appear on the wire for one direction of travel.
struct UdpPortPair {
  std::uint16_t src = 0;
  std::uint16_t dst = 0;

  constexpr UdpPortPair reversed() const { return {dst, src}; }
  constexpr std::uint32_t pack() const { return (std::uint32_t{src} << 16) | dst; }
  static constexpr UdpPortPair unpack(std::uint32_t v) {
    return {static_cast<std::uint16_t>(v >> 16), static_cast<std::uint16_t>(v & 0xffff)};
  }

  friend constexpr auto operator<=>(const UdpPortPair&, const UdpPortPair&) = default;
};

/// Flow identifier carried in the Machnet header, independent of UDP ports.
struct MachnetPortPair {
  std::uint16_t local = 0;
  std::uint16_t remote = 0;

  friend constexpr auto operator<=>(const MachnetPortPair&, const MachnetPortPair&) = default;
};

struct FourTuple {
  Ipv4Addr src_ip;
  Ipv4Addr dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;

  friend constexpr auto operator<=>(const FourTuple&, const FourTuple&) = default;
};

}  // namespace lcdnet

template <>
struct std::hash<lcdnet::UdpPortPair> {
  std::size_t operator()(const lcdnet::UdpPortPair& p) const noexcept {
    return std::hash<std::uint32_t>{}(p.pack());
  }
};
