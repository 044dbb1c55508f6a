#include "lcdnet/transport.hpp"

#include <algorithm>
#include <cstring>

#include "lcdnet/errors.hpp"

namespace lcdnet {
namespace {

void put32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 24);
  p[1] = static_cast<std::uint8_t>(v >> 16);
  p[2] = static_cast<std::uint8_t>(v >> 8);
  p[3] = static_cast<std::uint8_t>(v);
}
std::uint32_t get32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

std::vector<std::uint8_t> SackBlock::encode() const {
  std::vector<std::uint8_t> out(2 + 8 * ranges.size());
  out[0] = static_cast<std::uint8_t>(ranges.size() >> 8);
  out[1] = static_cast<std::uint8_t>(ranges.size());
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    put32(&out[2 + 8 * i], ranges[i].start);
    put32(&out[6 + 8 * i], ranges[i].end);
  }
  return out;
}

std::optional<SackBlock> SackBlock::decode(std::span<const std::uint8_t> payload) {
  if (payload.size() < 2) return std::nullopt;
  const std::size_t count = (std::size_t{payload[0]} << 8) | payload[1];
  if (count == 0 || count > kMaxRanges || payload.size() != 2 + 8 * count) return std::nullopt;
  SackBlock block;
  for (std::size_t i = 0; i < count; ++i) {
    SeqRange r{get32(&payload[2 + 8 * i]), get32(&payload[6 + 8 * i])};
    if (r.start >= r.end) return std::nullopt;
    if (!block.ranges.empty() && r.start <= block.ranges.back().end) return std::nullopt;
    block.ranges.push_back(r);
  }
  return block;
}

FlowState::FlowState(Ipv4Addr local_ip, FlowKey key, UdpPortPair tx_udp, UdpPortPair rx_udp, QueueId engine,
                     TransportConfig config, bool port_echo)
    : local_ip_(local_ip),
      key_(key),
      tx_udp_(tx_udp),
      rx_udp_(rx_udp),
      engine_(engine),
      config_(config),
      port_echo_(port_echo),
      rto_(config.rto_base) {
  if (config_.window == 0) throw Error(Errc::kArgument, "window must be positive");
  if (config_.ack_every == 0) throw Error(Errc::kArgument, "ack_every must be positive");
}

std::uint32_t FlowState::send_message(std::vector<std::uint8_t> payload) {
  if (reset_) throw Error(Errc::kState, "flow has been reset");
  if (payload.empty() || payload.size() > kMaxMessageSize) {
    throw Error(Errc::kSize, "message size " + std::to_string(payload.size()) + " outside [1, 8 MiB]");
  }
  const std::uint32_t id = next_msg_id_++;
  tx_queue_.push_back(TxMessage{id, std::move(payload), 0});
  ++counters_.messages_queued;
  return id;
}

bool FlowState::can_send() const { return !reset_ && next_tx_seq_ - snd_una_ < config_.window; }

Frame FlowState::make_frame(const MachnetHeader& h, std::span<const std::uint8_t> payload) const {
  MachnetHeader hdr = h;
  hdr.src_port = key_.local_port;
  hdr.dst_port = key_.remote_port;
  return build_frame(local_ip_, key_.remote_ip, tx_udp_, hdr, payload);
}

std::size_t FlowState::transmit(VirtualTime now, std::vector<Frame>& out) {
  std::size_t emitted = 0;
  while (!tx_queue_.empty() && can_send()) {
    TxMessage& msg = tx_queue_.front();
    const std::size_t len = std::min(kFragmentPayload, msg.payload.size() - msg.offset);
    MachnetHeader h;
    h.type = PacketType::kData;
    h.seq = next_tx_seq_++;
    h.msg_id = msg.msg_id;
    h.frag_offset = static_cast<std::uint32_t>(msg.offset);
    h.msg_len = static_cast<std::uint32_t>(msg.payload.size());
    if (msg.offset + len == msg.payload.size()) h.flags |= header_flags::kLastFragment;
    if (port_echo_) {
      h.flags |= header_flags::kPortEcho;
      h.ack = rx_udp_.pack();
    }
    Frame f = make_frame(h, std::span(msg.payload).subspan(msg.offset, len));
    out.push_back(f);
    unacked_.emplace(h.seq, TxEntry{std::move(f), now});
    ++counters_.fragments_first_sent;
    ++emitted;
    if (!rto_deadline_) rto_deadline_ = now + rto_;
    msg.offset += len;
    if (msg.offset == msg.payload.size()) tx_queue_.pop_front();
  }
  return emitted;
}

SackBlock FlowState::current_sack() const {
  SackBlock block;
  for (auto it = rx_out_of_order_.begin(); it != rx_out_of_order_.end();) {
    SeqRange r{*it, *it + 1};
    for (++it; it != rx_out_of_order_.end() && *it == r.end; ++it) ++r.end;
    block.ranges.push_back(r);
    if (block.ranges.size() == SackBlock::kMaxRanges) break;
  }
  return block;
}

void FlowState::send_ack(VirtualTime, std::vector<Frame>& out) {
  MachnetHeader h;
  h.ack = rx_next_;
  if (config_.sack_enabled && !rx_out_of_order_.empty()) {
    h.type = PacketType::kSack;
    out.push_back(make_frame(h, current_sack().encode()));
    ++counters_.sacks_sent;
  } else {
    h.type = PacketType::kAck;
    out.push_back(make_frame(h, {}));
    ++counters_.acks_sent;
  }
  owed_acks_ = 0;
  ack_deadline_.reset();
}

void FlowState::on_data(const Packet& pkt, VirtualTime now, std::vector<Frame>& out,
                        std::vector<DeliveredMessage>& delivered) {
  ++counters_.data_received;
  const MachnetHeader& h = pkt.header;
  const std::uint32_t seq = h.seq;
  if (seq < rx_next_ || rx_out_of_order_.contains(seq)) {
    ++counters_.duplicates;
    send_ack(now, out);
    return;
  }
  if (seq - rx_next_ >= config_.window) {
    ++counters_.out_of_window;
    return;
  }

  const bool in_order = seq == rx_next_;
  if (in_order) {
    ++rx_next_;
    while (!rx_out_of_order_.empty() && *rx_out_of_order_.begin() == rx_next_) {
      rx_out_of_order_.erase(rx_out_of_order_.begin());
      ++rx_next_;
    }
  } else {
    rx_out_of_order_.insert(seq);
  }

  if (h.msg_id >= next_release_msg_id_ && !completed_.contains(h.msg_id)) {
    Reassembly& r = reassembly_[h.msg_id];
    if (r.buffer.empty()) r.buffer.resize(h.msg_len);
    if (r.buffer.size() != h.msg_len) {
      ++counters_.protocol_errors;
    } else {
      std::memcpy(r.buffer.data() + h.frag_offset, pkt.payload.data(), pkt.payload.size());
      r.received += pkt.payload.size();
      if (r.received == r.buffer.size()) {
        completed_.emplace(h.msg_id, std::move(r.buffer));
        reassembly_.erase(h.msg_id);
      }
    }
  }
  for (auto it = completed_.find(next_release_msg_id_); it != completed_.end();
       it = completed_.find(next_release_msg_id_)) {
    delivered.push_back(DeliveredMessage{it->first, std::move(it->second)});
    completed_.erase(it);
    ++next_release_msg_id_;
    ++counters_.messages_delivered;
  }

  if (!in_order || !rx_out_of_order_.empty()) {
    send_ack(now, out);
    return;
  }
  if (++owed_acks_ >= config_.ack_every) {
    send_ack(now, out);
  } else if (!ack_deadline_) {
    ack_deadline_ = now + config_.ack_delay;
  }
}

void FlowState::acked(std::map<std::uint32_t, TxEntry>::iterator it) {
  unacked_.erase(it);
  ++counters_.fragments_acked;
}

void FlowState::retransmit(TxEntry& entry, VirtualTime now, std::vector<Frame>& out) {
  out.push_back(entry.frame);
  entry.sent_at = now;
  entry.resent_below = next_tx_seq_;
  entry.hole_reports = 0;
  ++entry.retransmits;
  ++counters_.fragments_retransmitted;
}

void FlowState::on_ack(const Packet& pkt, VirtualTime now, std::vector<Frame>& out) {
  ++counters_.acks_received;
  const std::uint32_t cum = pkt.header.ack;
  if (cum == 0 || cum > next_tx_seq_) {
    ++counters_.protocol_errors;
    return;
  }
  std::optional<SackBlock> sack;
  if (pkt.header.type == PacketType::kSack) {
    sack = SackBlock::decode(pkt.payload);
    if (!sack || sack->ranges.back().end > next_tx_seq_) {
      ++counters_.protocol_errors;
      return;
    }
  }
  port_echo_ = false;

  const bool progress = cum > snd_una_;
  while (!unacked_.empty() && unacked_.begin()->first < cum) acked(unacked_.begin());
  snd_una_ = std::max(snd_una_, cum);

  if (sack && config_.sack_enabled) {
    for (const SeqRange& r : sack->ranges) {
      for (auto it = unacked_.lower_bound(r.start); it != unacked_.end() && it->first < r.end;) acked(it++);
    }
    // Everything still unacked below the highest SACKed range is a hole. A
    // hole already resent only counts once something sent after the resend
    // has been SACKed; until then the resend may simply be in flight.
    const std::uint32_t highest = sack->ranges.back().start;
    const std::uint32_t newest = sack->ranges.back().end - 1;
    for (auto it = unacked_.begin(); it != unacked_.end() && it->first < highest; ++it) {
      TxEntry& e = it->second;
      if (e.retransmits > 0 && newest < e.resent_below) continue;
      if (++e.hole_reports >= config_.fast_retransmit_threshold) {
        retransmit(e, now, out);
        ++counters_.fast_retransmits;
      }
    }
  }

  if (progress) rto_ = config_.rto_base;
  if (unacked_.empty()) {
    rto_deadline_.reset();
  } else if (progress) {
    rto_deadline_ = now + rto_;
  }
}

bool FlowState::on_rto(VirtualTime now, std::vector<Frame>& out) {
  if (unacked_.empty()) {
    rto_deadline_.reset();
    return true;
  }
  TxEntry& oldest = unacked_.begin()->second;
  if (oldest.retransmits >= config_.max_retransmits) {
    reset_ = true;
    rto_deadline_.reset();
    return false;
  }
  retransmit(oldest, now, out);
  ++counters_.rto_fired;
  rto_ = std::min(rto_ * 2, config_.rto_max);
  rto_deadline_ = now + rto_;
  return true;
}

bool FlowState::on_timers(VirtualTime now, std::vector<Frame>& out) {
  if (ack_deadline_ && *ack_deadline_ <= now) send_ack(now, out);
  if (rto_deadline_ && *rto_deadline_ <= now) return on_rto(now, out);
  return true;
}

std::optional<VirtualTime> FlowState::next_deadline() const {
  if (ack_deadline_ && rto_deadline_) return std::min(*ack_deadline_, *rto_deadline_);
  return ack_deadline_ ? ack_deadline_ : rto_deadline_;
}

}  // namespace lcdnet
