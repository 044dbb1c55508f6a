#include "lcdnet/wire.hpp"

#include <algorithm>
#include <cstring>

#include "lcdnet/errors.hpp"

namespace lcdnet {
namespace {

void put16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

void put32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}

std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t get32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

std::uint16_t ipv4_checksum(const std::uint8_t* hdr, std::size_t len) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < len; i += 2) sum += get16(hdr + i);
  while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
  return static_cast<std::uint16_t>(~sum);
}

constexpr std::size_t kIpOffset = kEthernetHeaderLen;

// IPv4 header length, or 0 when the frame is not IPv4.
std::size_t ipv4_header_len(std::span<const std::uint8_t> f) {
  if (f.size() < kIpOffset + kIpv4HeaderLen) return 0;
  if (get16(f.data() + 12) != kEtherTypeIpv4) return 0;
  const std::uint8_t vihl = f[kIpOffset];
  if ((vihl >> 4) != 4) return 0;
  const std::size_t ihl = std::size_t{vihl & 0x0fu} * 4;
  if (ihl < kIpv4HeaderLen || f.size() < kIpOffset + ihl) return 0;
  return ihl;
}

bool valid_type(std::uint8_t t) { return t >= 1 && t <= 7; }

}  // namespace

MacAddr mac_for(Ipv4Addr ip) {
  return {0x02, 0x00, static_cast<std::uint8_t>(ip.value >> 24), static_cast<std::uint8_t>(ip.value >> 16),
          static_cast<std::uint8_t>(ip.value >> 8), static_cast<std::uint8_t>(ip.value)};
}

void encode_header(const MachnetHeader& h, std::span<std::uint8_t, kMachnetHeaderLen> out) {
  std::uint8_t* p = out.data();
  p[0] = kMachnetMagic0;
  p[1] = kMachnetMagic1;
  p[2] = kMachnetVersion;
  p[3] = static_cast<std::uint8_t>(h.type);
  put16(p + 4, h.src_port);
  put16(p + 6, h.dst_port);
  put32(p + 8, h.seq);
  put32(p + 12, h.ack);
  put32(p + 16, h.msg_id);
  put32(p + 20, h.frag_offset);
  put32(p + 24, h.msg_len);
  put16(p + 28, h.flags);
  put16(p + 30, h.reserved);
}

std::optional<MachnetHeader> decode_header(std::span<const std::uint8_t> in) {
  if (in.size() < kMachnetHeaderLen) return std::nullopt;
  const std::uint8_t* p = in.data();
  if (p[0] != kMachnetMagic0 || p[1] != kMachnetMagic1 || p[2] != kMachnetVersion) return std::nullopt;
  if (!valid_type(p[3])) return std::nullopt;
  MachnetHeader h;
  h.type = static_cast<PacketType>(p[3]);
  h.src_port = get16(p + 4);
  h.dst_port = get16(p + 6);
  h.seq = get32(p + 8);
  h.ack = get32(p + 12);
  h.msg_id = get32(p + 16);
  h.frag_offset = get32(p + 20);
  h.msg_len = get32(p + 24);
  h.flags = get16(p + 28);
  h.reserved = get16(p + 30);
  return h;
}

Frame build_frame(Ipv4Addr src_ip, Ipv4Addr dst_ip, UdpPortPair udp, const MachnetHeader& header,
                  std::span<const std::uint8_t> payload) {
  const std::size_t total = kHeadersLen + payload.size();
  if (total > kEthernetMtu) {
    throw Error(Errc::kSize, "frame of " + std::to_string(total) + " octets exceeds the MTU");
  }
  std::vector<std::uint8_t> bytes(total);
  std::uint8_t* p = bytes.data();

  const MacAddr dst_mac = mac_for(dst_ip);
  const MacAddr src_mac = mac_for(src_ip);
  std::copy(dst_mac.begin(), dst_mac.end(), p);
  std::copy(src_mac.begin(), src_mac.end(), p + 6);
  put16(p + 12, kEtherTypeIpv4);

  std::uint8_t* ip = p + kIpOffset;
  ip[0] = 0x45;
  ip[1] = 0;
  put16(ip + 2, static_cast<std::uint16_t>(total - kEthernetHeaderLen));
  put16(ip + 4, 0);       // identification
  put16(ip + 6, 0x4000);  // DF
  ip[8] = 64;
  ip[9] = kIpProtoUdp;
  put16(ip + 10, 0);
  put32(ip + 12, src_ip.value);
  put32(ip + 16, dst_ip.value);
  put16(ip + 10, ipv4_checksum(ip, kIpv4HeaderLen));

  std::uint8_t* u = ip + kIpv4HeaderLen;
  put16(u, udp.src);
  put16(u + 2, udp.dst);
  put16(u + 4, static_cast<std::uint16_t>(kUdpHeaderLen + kMachnetHeaderLen + payload.size()));
  put16(u + 6, 0);  // checksum optional over IPv4

  encode_header(header, std::span<std::uint8_t, kMachnetHeaderLen>(u + kUdpHeaderLen, kMachnetHeaderLen));
  if (!payload.empty()) std::memcpy(u + kUdpHeaderLen + kMachnetHeaderLen, payload.data(), payload.size());
  return Frame(std::move(bytes));
}

std::optional<Ipv4Addr> parse_ipv4_dst(std::span<const std::uint8_t> f) {
  if (ipv4_header_len(f) == 0) return std::nullopt;
  return Ipv4Addr{get32(f.data() + kIpOffset + 16)};
}

std::optional<FourTuple> parse_udp_tuple(std::span<const std::uint8_t> f) {
  const std::size_t ihl = ipv4_header_len(f);
  if (ihl == 0) return std::nullopt;
  const std::uint8_t* ip = f.data() + kIpOffset;
  if (ip[9] != kIpProtoUdp) return std::nullopt;
  if (f.size() < kIpOffset + ihl + kUdpHeaderLen) return std::nullopt;
  const std::uint8_t* u = ip + ihl;
  return FourTuple{Ipv4Addr{get32(ip + 12)}, Ipv4Addr{get32(ip + 16)}, get16(u), get16(u + 2)};
}

std::optional<Packet> parse_packet(const Frame& frame) {
  const auto f = frame.bytes();
  const auto tuple = parse_udp_tuple(f);
  if (!tuple) return std::nullopt;
  const std::size_t ihl = ipv4_header_len(f);
  const std::size_t udp_off = kIpOffset + ihl;
  const std::size_t udp_len = get16(f.data() + udp_off + 4);
  if (udp_len < kUdpHeaderLen + kMachnetHeaderLen || udp_off + udp_len > f.size()) return std::nullopt;
  const std::size_t mn_off = udp_off + kUdpHeaderLen;
  auto header = decode_header(f.subspan(mn_off, kMachnetHeaderLen));
  if (!header) return std::nullopt;
  Packet pkt;
  pkt.tuple = *tuple;
  pkt.header = *header;
  pkt.payload = f.subspan(mn_off + kMachnetHeaderLen, udp_len - kUdpHeaderLen - kMachnetHeaderLen);
  if (header->type == PacketType::kData) {
    const std::uint64_t end = std::uint64_t{header->frag_offset} + pkt.payload.size();
    if (pkt.payload.empty() || header->msg_len > kMaxMessageSize || end > header->msg_len) return std::nullopt;
  }
  return pkt;
}

}  // namespace lcdnet
