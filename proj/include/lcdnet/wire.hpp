#pragma once

// On-wire layout: Ethernet II / IPv4 (no options) / UDP / 32-octet Machnet
// header / payload. All multi-octet fields big-endian. See docs/wire.md.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "lcdnet/lcd_nic.hpp"
#include "lcdnet/net_types.hpp"

namespace lcdnet {

inline constexpr std::size_t kIpv4HeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kMachnetHeaderLen = 32;
inline constexpr std::size_t kHeadersLen =
    kEthernetHeaderLen + kIpv4HeaderLen + kUdpHeaderLen + kMachnetHeaderLen;
inline constexpr std::size_t kFragmentPayload = 1408;
inline constexpr std::size_t kMaxMessageSize = 8 * 1024 * 1024;
inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint8_t kIpProtoUdp = 17;
inline constexpr std::uint8_t kMachnetMagic0 = 0x4D;
inline constexpr std::uint8_t kMachnetMagic1 = 0x4E;
inline constexpr std::uint8_t kMachnetVersion = 0x01;

static_assert(kHeadersLen + kFragmentPayload <= kEthernetMtu);

enum class PacketType : std::uint8_t {
  kSyn = 1,
  kSynAck = 2,
  kAck = 3,
  kData = 4,
  kSack = 5,
  kFin = 6,
  kFinAck = 7,
};

namespace header_flags {
inline constexpr std::uint16_t kLastFragment = 0x0001;
// DATA only: `ack` carries the sender's receive-direction UDP pair (packed).
inline constexpr std::uint16_t kPortEcho = 0x0002;
// ACK only: the third leg of the handshake, payload carries a UDP pair.
inline constexpr std::uint16_t kHandshake = 0x0004;
}  // namespace header_flags

struct MachnetHeader {
  PacketType type = PacketType::kData;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint32_t msg_id = 0;
  std::uint32_t frag_offset = 0;
  std::uint32_t msg_len = 0;
  std::uint16_t flags = 0;
  std::uint16_t reserved = 0;

  bool has_flag(std::uint16_t f) const { return (flags & f) != 0; }
  friend bool operator==(const MachnetHeader&, const MachnetHeader&) = default;
};

void encode_header(const MachnetHeader& h, std::span<std::uint8_t, kMachnetHeaderLen> out);
/// nullopt on bad magic, version, or packet type.
std::optional<MachnetHeader> decode_header(std::span<const std::uint8_t> in);

struct Packet {
  FourTuple tuple;
  MachnetHeader header;
  std::span<const std::uint8_t> payload;  // views into the source frame

  UdpPortPair udp() const { return {tuple.src_port, tuple.dst_port}; }
};

/// Builds a complete frame. Throws Error(kSize) if it would exceed the MTU.
Frame build_frame(Ipv4Addr src_ip, Ipv4Addr dst_ip, UdpPortPair udp, const MachnetHeader& header,
                  std::span<const std::uint8_t> payload);

/// IPv4/UDP four-tuple, or nullopt for anything that is not IPv4/UDP.
std::optional<FourTuple> parse_udp_tuple(std::span<const std::uint8_t> frame);
/// IPv4 destination, or nullopt for non-IPv4 frames.
std::optional<Ipv4Addr> parse_ipv4_dst(std::span<const std::uint8_t> frame);

/// Full parse with Machnet header validation (magic, version, type, length
/// consistency, and for DATA frag_offset + len <= msg_len <= 8 MiB).
std::optional<Packet> parse_packet(const Frame& frame);

MacAddr mac_for(Ipv4Addr ip);

}  // namespace lcdnet
