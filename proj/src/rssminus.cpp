#include "lcdnet/rssminus.hpp"

#include <algorithm>
#include <cmath>

#include "lcdnet/errors.hpp"

namespace lcdnet {
namespace {

void check_args(std::uint32_t engines, double p) {
  if (engines < 1) throw Error(Errc::kArgument, "engine count must be at least 1");
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::kArgument, "target probability must be in (0, 1)");
}

void put16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}
void put32(std::uint8_t* p, std::uint32_t v) {
  put16(p, static_cast<std::uint16_t>(v >> 16));
  put16(p + 2, static_cast<std::uint16_t>(v));
}
std::uint16_t get16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }
std::uint32_t get32(const std::uint8_t* p) { return (std::uint32_t{get16(p)} << 16) | get16(p + 2); }

}  // namespace

std::uint32_t required_batch_naive(std::uint32_t engines, double p) {
  check_args(engines, p);
  if (engines == 1) return 1;
  const double n2 = static_cast<double>(engines) * engines;
  return static_cast<std::uint32_t>(std::ceil(std::log(1.0 - p) / std::log(1.0 - 1.0 / n2)));
}

OptimizedBatch required_batch_optimized(std::uint32_t engines, double p) {
  check_args(engines, p);
  if (engines == 1) return {};
  const double x = std::log(1.0 - std::sqrt(p)) / std::log(1.0 - 1.0 / engines);
  return {static_cast<std::uint32_t>(std::ceil(x)), x, static_cast<std::uint32_t>(std::floor(2.0 * x))};
}

std::uint32_t batch_for_attempt(std::uint32_t first, std::uint32_t attempt, std::uint32_t cap) {
  std::uint64_t b = first;
  for (std::uint32_t i = 1; i < attempt && b < cap; ++i) b *= 2;
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(b, cap));
}

std::array<std::uint8_t, SynPayload::kSize> encode(const SynPayload& p) {
  std::array<std::uint8_t, SynPayload::kSize> out{};
  put16(&out[0], p.engines);
  put16(&out[2], p.attempt);
  out[4] = static_cast<std::uint8_t>(p.mode);
  return out;
}

std::optional<SynPayload> decode_syn_payload(std::span<const std::uint8_t> in) {
  if (in.size() != SynPayload::kSize || in[4] > 1) return std::nullopt;
  SynPayload p;
  p.engines = get16(&in[0]);
  p.attempt = get16(&in[2]);
  p.mode = static_cast<SprayMode>(in[4]);
  if (p.engines == 0 || p.attempt == 0) return std::nullopt;
  return p;
}

std::array<std::uint8_t, SynAckPayload::kSize> encode(const SynAckPayload& p) {
  std::array<std::uint8_t, SynAckPayload::kSize> out{};
  put32(&out[0], p.accepted_syn.pack());
  put16(&out[4], p.server_engine);
  put16(&out[6], p.server_engines);
  return out;
}

std::optional<SynAckPayload> decode_synack_payload(std::span<const std::uint8_t> in) {
  if (in.size() != SynAckPayload::kSize) return std::nullopt;
  SynAckPayload p;
  p.accepted_syn = UdpPortPair::unpack(get32(&in[0]));
  p.server_engine = get16(&in[4]);
  p.server_engines = get16(&in[6]);
  if (p.server_engines == 0 || p.server_engine >= p.server_engines) return std::nullopt;
  return p;
}

// ---------------------------------------------------------------------------

Handshaker::Handshaker(QueueId engine, std::uint32_t local_engines, Ipv4Addr local_ip, HandshakeConfig config,
                       std::uint64_t seed)
    : engine_(engine), local_engines_(local_engines), local_ip_(local_ip), config_(config), rng_(seed) {
  if (config_.udp_port_min > config_.udp_port_max) throw Error(Errc::kArgument, "empty UDP port range");
  if (config_.max_attempts < 1) throw Error(Errc::kArgument, "max_attempts must be at least 1");
}

std::uint32_t Handshaker::first_batch(std::uint32_t engines) const {
  if (config_.mode == SprayMode::kNaive) return required_batch_naive(engines, config_.target_probability);
  return required_batch_optimized(engines, config_.target_probability).per_side;
}

UdpPortPair Handshaker::fresh_pair(std::unordered_set<UdpPortPair>& used) {
  std::uniform_int_distribution<std::uint32_t> port(config_.udp_port_min, config_.udp_port_max);
  for (;;) {
    const UdpPortPair pair{static_cast<std::uint16_t>(port(rng_)), static_cast<std::uint16_t>(port(rng_))};
    if (used.insert(pair).second) return pair;
  }
}

const HandshakeState& Handshaker::initiate(Ipv4Addr remote_ip, MachnetPortPair ports, VirtualTime now,
                                           std::vector<Frame>& out) {
  const HandshakeKey key{remote_ip, ports};
  if (clients_.contains(key) || servers_.contains(key)) {
    throw Error(Errc::kState, "handshake already in progress for these ports");
  }
  HandshakeState& st = clients_[key];
  st.phase = HandshakePhase::kSynSent;
  st.mode = config_.mode;
  st.target_local_engine = engine_;
  st.remote_ip = remote_ip;
  st.ports = ports;
  st.attempt = 1;
  st.batch_size = std::min(first_batch(local_engines_), config_.batch_cap);
  st.batch_history.push_back(st.batch_size);
  st.started_at = now;
  st.retry_deadline = now + config_.retry_timeout;
  spray_syns(st, out);
  timers_.push({st.retry_deadline, key, false});
  return st;
}

void Handshaker::spray_syns(HandshakeState& st, std::vector<Frame>& out) {
  MachnetHeader h;
  h.type = PacketType::kSyn;
  h.src_port = st.ports.local;
  h.dst_port = st.ports.remote;
  const auto payload = encode(SynPayload{static_cast<std::uint16_t>(local_engines_),
                                         static_cast<std::uint16_t>(st.attempt), st.mode});
  for (std::uint32_t i = 0; i < st.batch_size; ++i) {
    const UdpPortPair pair = fresh_pair(st.sprayed_pairs);
    out.push_back(build_frame(local_ip_, st.remote_ip, pair, h, payload));
  }
  stats_.syns_sent += st.batch_size;
}

bool Handshaker::on_retry_timeout(HandshakeState& st, VirtualTime now, std::vector<Frame>& out) {
  if (st.phase != HandshakePhase::kSynSent) return st.phase == HandshakePhase::kFailed;
  if (st.attempt >= config_.max_attempts) {
    st.phase = HandshakePhase::kFailed;
    ++stats_.failures;
    return true;
  }
  ++st.attempt;
  ++stats_.retries;
  st.batch_size = batch_for_attempt(st.batch_history.front(), st.attempt, config_.batch_cap);
  st.batch_history.push_back(st.batch_size);
  spray_syns(st, out);
  st.retry_deadline = now + config_.retry_timeout;
  timers_.push({st.retry_deadline, HandshakeKey{st.remote_ip, st.ports}, false});
  return false;
}

std::optional<Established> Handshaker::on_synack(const Packet& pkt, VirtualTime now, std::vector<Frame>& out) {
  const auto key = HandshakeKey::from_incoming(pkt);
  auto it = clients_.find(key);
  if (it == clients_.end()) {
    ++stats_.synacks_unknown;
    return std::nullopt;
  }
  HandshakeState& st = it->second;
  if (st.phase != HandshakePhase::kSynSent) {
    ++stats_.synacks_discarded;
    return std::nullopt;
  }
  const auto payload = decode_synack_payload(pkt.payload);
  if (!payload) {
    ++stats_.malformed;
    return std::nullopt;
  }
  st.phase = HandshakePhase::kEstablished;
  st.target_remote_engine = QueueId{payload->server_engine};
  st.chosen_tx_udp = payload->accepted_syn;
  st.chosen_rx_udp = pkt.udp();
  // Keep the record around briefly so the rest of the batch is absorbed.
  st.retry_deadline = now + config_.half_open_timeout;
  timers_.push({st.retry_deadline, key, false});

  MachnetHeader h;
  h.type = PacketType::kAck;
  h.src_port = st.ports.local;
  h.dst_port = st.ports.remote;
  h.flags = header_flags::kHandshake;
  std::array<std::uint8_t, 4> echo{};
  put32(echo.data(), st.chosen_rx_udp->pack());
  out.push_back(build_frame(local_ip_, st.remote_ip, *st.chosen_tx_udp, h, echo));
  ++stats_.acks_sent;
  ++stats_.established_client;

  Established est;
  est.remote_ip = st.remote_ip;
  est.ports = st.ports;
  est.tx = *st.chosen_tx_udp;
  est.rx = *st.chosen_rx_udp;
  est.initiator = true;
  est.attempts = st.attempt;
  est.started_at = st.started_at;
  est.remote_engine = st.target_remote_engine;
  return est;
}

Frame Handshaker::synack_frame(const ServerHandshake& hs, UdpPortPair pair) const {
  MachnetHeader h;
  h.type = PacketType::kSynAck;
  h.src_port = hs.ports.local;
  h.dst_port = hs.ports.remote;
  const auto payload = encode(SynAckPayload{hs.accepted_syn, engine_.index(), static_cast<std::uint16_t>(local_engines_)});
  return build_frame(local_ip_, hs.remote_ip, pair, h, payload);
}

void Handshaker::spray_synacks(ServerHandshake& hs, std::uint32_t count, std::vector<Frame>& out) {
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(synack_frame(hs, fresh_pair(hs.sprayed_pairs)));
  stats_.synacks_sent += count;
  ++stats_.synack_batches;
  ++hs.synack_batches;
}

Handshaker::SynResult Handshaker::on_syn(const Packet& pkt, VirtualTime now, std::vector<Frame>& out) {
  const auto payload = decode_syn_payload(pkt.payload);
  if (!payload) {
    ++stats_.malformed;
    return SynResult::kMalformed;
  }
  const auto key = HandshakeKey::from_incoming(pkt);
  auto it = servers_.find(key);
  if (it != servers_.end() && it->second.phase == HandshakePhase::kEstablished) {
    ++stats_.syn_duplicates;
    return SynResult::kAbsorbed;
  }
  const bool fresh = it == servers_.end();
  if (!fresh && payload->mode == SprayMode::kOptimized && payload->attempt <= it->second.last_attempt) {
    ++stats_.syn_duplicates;
    return SynResult::kAbsorbed;
  }
  ServerHandshake& hs = servers_[key];
  if (fresh) {
    hs.remote_ip = key.remote_ip;
    hs.ports = key.ports;
    hs.started_at = now;
  }
  hs.mode = payload->mode;
  hs.client_engines = payload->engines;
  hs.accepted_syn = pkt.udp();
  hs.last_attempt = std::max<std::uint32_t>(hs.last_attempt, payload->attempt);
  hs.expires_at = now + config_.half_open_timeout;
  timers_.push({hs.expires_at, key, true});

  if (hs.mode == SprayMode::kNaive) {
    // The reply reuses the SYN's pair reversed, so it steers back only if
    // the client's side of the hash cooperates too.
    hs.sprayed_pairs.insert(pkt.udp().reversed());
    out.push_back(synack_frame(hs, pkt.udp().reversed()));
    ++stats_.synacks_sent;
    ++stats_.synack_batches;
    ++hs.synack_batches;
  } else {
    const auto per_side = required_batch_optimized(hs.client_engines, config_.target_probability).per_side;
    spray_synacks(hs, batch_for_attempt(per_side, payload->attempt, config_.batch_cap), out);
  }
  return SynResult::kResponded;
}

namespace {

Established server_established(ServerHandshake& hs, UdpPortPair tx, UdpPortPair rx) {
  hs.phase = HandshakePhase::kEstablished;
  Established est;
  est.remote_ip = hs.remote_ip;
  est.ports = hs.ports;
  est.tx = tx;
  est.rx = rx;
  est.initiator = false;
  est.attempts = hs.last_attempt;
  est.started_at = hs.started_at;
  return est;
}

}  // namespace

std::optional<Established> Handshaker::on_handshake_ack(const Packet& pkt) {
  auto it = servers_.find(HandshakeKey::from_incoming(pkt));
  if (it == servers_.end() || it->second.phase != HandshakePhase::kSynAckSent) return std::nullopt;
  if (pkt.payload.size() != 4) {
    ++stats_.malformed;
    return std::nullopt;
  }
  ++stats_.established_server;
  return server_established(it->second, UdpPortPair::unpack(get32(pkt.payload.data())), pkt.udp());
}

std::optional<Established> Handshaker::on_port_echo(const Packet& pkt) {
  auto it = servers_.find(HandshakeKey::from_incoming(pkt));
  if (it == servers_.end() || it->second.phase != HandshakePhase::kSynAckSent) return std::nullopt;
  ++stats_.established_server;
  return server_established(it->second, UdpPortPair::unpack(pkt.header.ack), pkt.udp());
}

std::optional<VirtualTime> Handshaker::next_deadline() {
  while (!timers_.empty()) {
    const Timer& t = timers_.top();
    bool live = false;
    if (t.server) {
      auto it = servers_.find(t.key);
      live = it != servers_.end() && it->second.expires_at == t.at;
    } else {
      auto it = clients_.find(t.key);
      live = it != clients_.end() && it->second.retry_deadline == t.at;
    }
    if (live) return t.at;
    timers_.pop();
  }
  return std::nullopt;
}

std::vector<HandshakeFailure> Handshaker::on_timers(VirtualTime now, std::vector<Frame>& out) {
  std::vector<HandshakeFailure> failed;
  while (auto due = next_deadline()) {
    if (*due > now) break;
    const Timer t = timers_.top();
    timers_.pop();
    if (t.server) {
      auto it = servers_.find(t.key);
      if (it->second.phase != HandshakePhase::kEstablished) ++stats_.half_open_reaped;
      servers_.erase(it);
      continue;
    }
    auto it = clients_.find(t.key);
    HandshakeState& st = it->second;
    if (st.phase == HandshakePhase::kSynSent && on_retry_timeout(st, now, out)) {
      failed.push_back({t.key, st.attempt, st.started_at});
    }
    if (st.phase != HandshakePhase::kSynSent) clients_.erase(it);
  }
  return failed;
}

HandshakeState* Handshaker::client_state(const HandshakeKey& key) {
  auto it = clients_.find(key);
  return it == clients_.end() ? nullptr : &it->second;
}

const ServerHandshake* Handshaker::server_state(const HandshakeKey& key) const {
  auto it = servers_.find(key);
  return it == servers_.end() ? nullptr : &it->second;
}

void Handshaker::abandon(const HandshakeKey& key) {
  clients_.erase(key);
  servers_.erase(key);
}

}  // namespace lcdnet
