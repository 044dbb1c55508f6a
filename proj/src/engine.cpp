#include "lcdnet/engine.hpp"

#include <algorithm>

#include "lcdnet/errors.hpp"

namespace lcdnet {
namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

FlowKey incoming_key(const Packet& pkt) { return {pkt.tuple.src_ip, pkt.header.dst_port, pkt.header.src_port}; }

FlowHandle handle_of(const FlowKey& key) { return {key.remote_ip, key.local_port, key.remote_port}; }

}  // namespace

void TransportTotals::add(const FlowCounters& c, std::size_t unacked) {
  fragments_first_sent += c.fragments_first_sent;
  fragments_retransmitted += c.fragments_retransmitted;
  fragments_acked += c.fragments_acked;
  fragments_unacked += unacked;
  fast_retransmits += c.fast_retransmits;
  rto_fired += c.rto_fired;
  duplicates += c.duplicates;
  out_of_window += c.out_of_window;
  protocol_errors += c.protocol_errors;
  messages_delivered += c.messages_delivered;
}

// ---------------------------------------------------------------------------

ListenerRegistry::ListenerRegistry(std::size_t engines)
    : inboxes_(engines), pending_(std::make_unique<std::atomic<bool>[]>(engines)) {}

bool ListenerRegistry::try_register(std::uint16_t port, QueueId target, std::shared_ptr<Channel> channel) {
  std::lock_guard lock(mu_);
  if (!ports_.emplace(port, target).second) return false;
  for (std::size_t e = 0; e < inboxes_.size(); ++e) {
    inboxes_[e].push_back(Update{true, port, target, e == target.index() ? channel : nullptr});
    pending_[e].store(true, std::memory_order_release);
  }
  return true;
}

void ListenerRegistry::unregister(std::uint16_t port) {
  std::lock_guard lock(mu_);
  auto it = ports_.find(port);
  if (it == ports_.end()) return;
  for (std::size_t e = 0; e < inboxes_.size(); ++e) {
    inboxes_[e].push_back(Update{false, port, it->second, nullptr});
    pending_[e].store(true, std::memory_order_release);
  }
  ports_.erase(it);
}

bool ListenerRegistry::is_listening(std::uint16_t port) const {
  std::lock_guard lock(mu_);
  return ports_.contains(port);
}

std::vector<ListenerRegistry::Update> ListenerRegistry::drain(QueueId engine) {
  if (!pending_[engine.index()].load(std::memory_order_acquire)) return {};
  std::lock_guard lock(mu_);
  std::vector<Update> out;
  out.swap(inboxes_[engine.index()]);
  pending_[engine.index()].store(false, std::memory_order_relaxed);
  return out;
}

bool ListenerRegistry::has_updates(QueueId engine) const {
  return pending_[engine.index()].load(std::memory_order_acquire);
}

// ---------------------------------------------------------------------------

Engine::Engine(QueueId id, std::size_t engine_count, Nic& nic, const VirtualClock& clock,
               ListenerRegistry& listeners, EngineConfig config, std::uint64_t seed)
    : id_(id),
      engine_count_(engine_count),
      nic_(nic),
      clock_(clock),
      registry_(listeners),
      config_(config),
      handshaker_(id, static_cast<std::uint32_t>(engine_count), nic.config().local_ip, config.handshake, seed) {
  if (id.index() >= nic.num_queues()) throw Error(Errc::kArgument, "engine id beyond NIC queues");
  if (config_.burst == 0) throw Error(Errc::kArgument, "burst must be positive");
}

Engine::~Engine() = default;

void Engine::bind_channel(std::shared_ptr<Channel> channel) {
  std::lock_guard lock(bind_mu_);
  pending_binds_.push_back(std::move(channel));
  has_binds_.store(true, std::memory_order_release);
}

std::size_t Engine::channel_count() const {
  std::lock_guard lock(bind_mu_);
  return channels_.size() + pending_binds_.size();
}

void Engine::adopt_channels() {
  if (!has_binds_.load(std::memory_order_acquire)) return;
  std::lock_guard lock(bind_mu_);
  for (auto& ch : pending_binds_) channels_.push_back(BoundChannel{std::move(ch), {}, {}});
  pending_binds_.clear();
  has_binds_.store(false, std::memory_order_relaxed);
}

void Engine::apply_listener_updates() {
  for (auto& u : registry_.drain(id_)) {
    if (u.add) {
      listeners_[u.port] = ListenerEntry{u.target, std::move(u.channel)};
    } else {
      listeners_.erase(u.port);
    }
  }
}

std::size_t Engine::run_iteration() {
  const VirtualTime now = clock_.now();
  ++stats_.iterations;
  iter_tx_frames_ = 0;
  adopt_channels();
  apply_listener_updates();

  std::size_t work = 0;
  // (1) NIC receive.
  auto frames = nic_.rx_burst(id_, config_.burst);
  const std::size_t rx_frames = frames.size();
  for (const Frame& f : frames) process_frame(f, now);
  stats_.frames_rx += rx_frames;
  flush_tx();

  // (2) Application messages.
  std::size_t app_msgs = 0;
  for (auto& b : channels_) app_msgs += drain_channel(b, now);

  // (3) Timers.
  work += fire_timers(now);

  // (4) Control requests, on the fixed polling grid.
  if (now >= next_ctrl_poll_) {
    for (auto& b : channels_) {
      b.channel->note_engine_touch(id_);
      while (auto req = b.channel->requests().try_pop()) {
        handle_request(b, *req, now);
        ++work;
      }
    }
    const auto interval = config_.ctrl_poll_interval.count();
    const auto t = now.time_since_epoch().count();
    next_ctrl_poll_ = VirtualTime{VirtualDuration{(t / interval + 1) * interval}};
    apply_listener_updates();
  }

  work += transmit_flows(now);
  work += flush_deliveries();
  work += flush_tx();

  last_cost_ = config_.cost.per_rx_frame * static_cast<std::int64_t>(rx_frames) +
               config_.cost.per_tx_frame * static_cast<std::int64_t>(iter_tx_frames_) +
               config_.cost.per_app_message * static_cast<std::int64_t>(app_msgs);
  return work + rx_frames + app_msgs;
}

// ---------------------------------------------------------------------------
// Receive path

void Engine::process_frame(const Frame& frame, VirtualTime now) {
  const auto pkt = parse_packet(frame);
  if (!pkt) {
    ++stats_.frames_malformed;
    return;
  }
  switch (pkt->header.type) {
    case PacketType::kSyn:
      on_syn(*pkt, now);
      break;
    case PacketType::kSynAck:
      on_synack(*pkt, now);
      break;
    case PacketType::kAck:
    case PacketType::kSack:
      on_ack(*pkt, now);
      break;
    case PacketType::kData:
      on_data(*pkt, now);
      break;
    case PacketType::kFin:
      on_fin(*pkt, false, now);
      break;
    case PacketType::kFinAck:
      on_fin(*pkt, true, now);
      break;
  }
}

bool Engine::in_partition(std::uint16_t port) const {
  return port >= config_.ephemeral_port_min && port <= config_.ephemeral_port_max;
}

std::optional<QueueId> Engine::partition_owner(std::uint16_t port) const {
  if (auto it = listeners_.find(port); it != listeners_.end()) return it->second.target;
  if (!in_partition(port)) return std::nullopt;
  return QueueId{static_cast<std::uint16_t>((port - config_.ephemeral_port_min) % engine_count_)};
}

bool Engine::owned_elsewhere(std::uint16_t local_port) const {
  const auto owner = partition_owner(local_port);
  return owner && *owner != id_;
}

void Engine::drop_unmatched(std::uint16_t local_port) {
  if (owned_elsewhere(local_port)) {
    ++stats_.drops_cross_engine;
  } else {
    ++stats_.drops_unknown_flow;
  }
}

void Engine::touch(Flow& flow) {
  if (flow.state.engine() != id_) ++foreign_flow_touches_;
}

void Engine::on_syn(const Packet& pkt, VirtualTime now) {
  auto it = listeners_.find(pkt.header.dst_port);
  if (it == listeners_.end()) {
    ++stats_.drops_no_listener;
    return;
  }
  if (it->second.target != id_) {
    ++stats_.syn_wrong_engine;
    return;
  }
  if (flows_.contains(incoming_key(pkt)) && !handshaker_.server_state(HandshakeKey::from_incoming(pkt))) {
    ++stats_.duplicate_syns;
    return;
  }
  handshaker_.on_syn(pkt, now, scratch_out_);
}

void Engine::on_synack(const Packet& pkt, VirtualTime now) {
  const auto hkey = HandshakeKey::from_incoming(pkt);
  if (!handshaker_.client_state(hkey)) {
    if (owned_elsewhere(pkt.header.dst_port)) {
      ++stats_.drops_cross_engine;
      return;
    }
    if (flows_.contains(incoming_key(pkt))) {
      ++stats_.late_synacks;
      return;
    }
  }
  auto est = handshaker_.on_synack(pkt, now, scratch_out_);
  if (!est) return;
  auto pending = pending_connects_.find(hkey);
  if (pending == pending_connects_.end()) return;  // connect was abandoned
  auto channel = pending->second.channel;
  const auto request_id = pending->second.request_id;
  pending_connects_.erase(pending);
  establish(*est, std::move(channel), request_id);
}

void Engine::on_ack(const Packet& pkt, VirtualTime now) {
  const FlowKey key = incoming_key(pkt);
  auto it = flows_.find(key);
  if (pkt.header.has_flag(header_flags::kHandshake)) {
    if (it != flows_.end()) return;  // duplicate third leg
    auto est = handshaker_.on_handshake_ack(pkt);
    if (!est) {
      drop_unmatched(key.local_port);
      return;
    }
    auto l = listeners_.find(key.local_port);
    establish(*est, l == listeners_.end() ? nullptr : l->second.channel, 0);
    return;
  }
  if (it == flows_.end()) {
    drop_unmatched(key.local_port);
    return;
  }
  Flow& flow = it->second;
  touch(flow);
  flow.state.on_ack(pkt, now, scratch_out_);
  maybe_fin(flow, now);
  sync_timer(key, flow);
}

void Engine::on_data(const Packet& pkt, VirtualTime now) {
  const FlowKey key = incoming_key(pkt);
  auto it = flows_.find(key);
  if (it == flows_.end() && pkt.header.has_flag(header_flags::kPortEcho)) {
    if (auto est = handshaker_.on_port_echo(pkt)) {
      auto l = listeners_.find(key.local_port);
      establish(*est, l == listeners_.end() ? nullptr : l->second.channel, 0);
      it = flows_.find(key);
    }
  }
  if (it == flows_.end()) {
    drop_unmatched(key.local_port);
    return;
  }
  Flow& flow = it->second;
  touch(flow);
  std::vector<DeliveredMessage> delivered;
  flow.state.on_data(pkt, now, scratch_out_, delivered);
  deliver(flow, delivered);
  sync_timer(key, flow);
}

void Engine::on_fin(const Packet& pkt, bool fin_ack, VirtualTime) {
  const FlowKey key = incoming_key(pkt);
  auto it = flows_.find(key);
  if (fin_ack) {
    if (it == flows_.end() || !it->second.closing) return;
    post_event(it->second.channel, {EventKind::kFlowClosed, 0, handle_of(key), 0, clock_.now()});
    ++stats_.flows_closed;
    retire(it);
    return;
  }
  MachnetHeader h;
  h.type = PacketType::kFinAck;
  h.src_port = key.local_port;
  h.dst_port = key.remote_port;
  const UdpPortPair pair = it != flows_.end() ? it->second.state.tx_udp() : pkt.udp().reversed();
  scratch_out_.push_back(build_frame(nic_.config().local_ip, key.remote_ip, pair, h, {}));
  if (it == flows_.end()) return;
  post_event(it->second.channel, {EventKind::kFlowClosed, 0, handle_of(key), 0, clock_.now()});
  ++stats_.flows_closed;
  retire(it);
}

// ---------------------------------------------------------------------------
// Flow lifecycle

void Engine::establish(const Established& est, std::shared_ptr<Channel> channel, std::uint64_t request_id) {
  if (!channel) return;  // listener went away mid-handshake
  const FlowKey key{est.remote_ip, est.ports.local, est.ports.remote};
  // The initiator echoes its receive pair in DATA until the peer acks, which
  // completes the peer even if the handshake ACK was lost.
  auto [it, inserted] = flows_.try_emplace(
      key, Flow{FlowState(nic_.config().local_ip, key, est.tx, est.rx, id_, config_.transport, est.initiator),
                channel, est.initiator, est.attempts, false, false, 0, std::nullopt, std::nullopt});
  if (!inserted) return;
  ++stats_.flows_established;
  ControlEvent ev{est.initiator ? EventKind::kConnected : EventKind::kAccepted, request_id, handle_of(key),
                  est.attempts, clock_.now()};
  post_event(channel, ev);
}

void Engine::retire(std::unordered_map<FlowKey, Flow, FlowKeyHash>::iterator it) {
  retired_.add(it->second.state.counters(), it->second.state.unacked_count());
  active_tx_.erase(it->first);
  flows_.erase(it);
}

void Engine::reset_flow(const FlowKey& key, EventKind why) {
  auto it = flows_.find(key);
  if (it == flows_.end()) return;
  post_event(it->second.channel, {why, 0, handle_of(key), 0, clock_.now()});
  ++stats_.flows_reset;
  retire(it);
}

void Engine::send_fin(Flow& flow, VirtualTime now) {
  MachnetHeader h;
  h.type = PacketType::kFin;
  h.src_port = flow.state.key().local_port;
  h.dst_port = flow.state.key().remote_port;
  scratch_out_.push_back(build_frame(nic_.config().local_ip, flow.state.key().remote_ip, flow.state.tx_udp(), h, {}));
  flow.fin_sent = true;
  ++flow.fin_attempts;
  flow.fin_deadline = now + config_.fin_timeout;
}

void Engine::maybe_fin(Flow& flow, VirtualTime now) {
  if (flow.closing && !flow.fin_sent && flow.state.idle()) send_fin(flow, now);
}

void Engine::sync_timer(const FlowKey& key, Flow& flow) {
  auto d = flow.state.next_deadline();
  if (flow.fin_deadline && (!d || *flow.fin_deadline < *d)) d = flow.fin_deadline;
  if (d && d != flow.timer_at) flow_timers_.push({*d, key});
  flow.timer_at = d;
}

std::size_t Engine::fire_timers(VirtualTime now) {
  std::size_t fired = 0;
  for (const auto& failure : handshaker_.on_timers(now, scratch_out_)) {
    ++fired;
    auto pending = pending_connects_.find(failure.key);
    if (pending == pending_connects_.end()) continue;
    ++stats_.connect_failures;
    FlowHandle h{failure.key.remote_ip, failure.key.ports.local, failure.key.ports.remote};
    post_event(pending->second.channel,
               {EventKind::kConnectFailed, pending->second.request_id, h, failure.attempts, now});
    pending_connects_.erase(pending);
  }
  while (!flow_timers_.empty() && flow_timers_.top().at <= now) {
    const FlowTimer t = flow_timers_.top();
    flow_timers_.pop();
    auto it = flows_.find(t.key);
    if (it == flows_.end() || it->second.timer_at != t.at) continue;
    Flow& flow = it->second;
    flow.timer_at.reset();
    touch(flow);
    ++fired;
    if (flow.fin_deadline && *flow.fin_deadline <= now) {
      flow.fin_deadline.reset();
      if (flow.fin_attempts >= config_.fin_attempts) {
        post_event(flow.channel, {EventKind::kFlowClosed, 0, handle_of(t.key), 0, now});
        ++stats_.flows_closed;
        retire(it);
        continue;
      }
      send_fin(flow, now);
    }
    if (!flow.state.on_timers(now, scratch_out_)) {
      reset_flow(t.key, EventKind::kFlowReset);
      continue;
    }
    if (flow.state.has_unsent()) active_tx_[t.key] = true;
    sync_timer(t.key, flow);
  }
  return fired;
}

// ---------------------------------------------------------------------------
// Application side

Engine::BoundChannel* Engine::bound(const std::shared_ptr<Channel>& channel) {
  for (auto& b : channels_) {
    if (b.channel == channel) return &b;
  }
  return nullptr;
}

void Engine::post_event(const std::shared_ptr<Channel>& channel, ControlEvent ev) {
  if (!channel) return;
  channel->note_engine_touch(id_);
  BoundChannel* b = bound(channel);
  if ((b && !b->event_overflow.empty()) || !channel->events().try_push(std::move(ev))) {
    if (b) b->event_overflow.push_back(ev);
  }
  channel->wakeup().signal();
}

void Engine::deliver(Flow& flow, std::vector<DeliveredMessage>& delivered) {
  if (delivered.empty()) return;
  Channel& ch = *flow.channel;
  ch.note_engine_touch(id_);
  BoundChannel* b = bound(flow.channel);
  const FlowHandle h = handle_of(flow.state.key());
  for (auto& m : delivered) {
    Message msg{h, std::move(m.payload)};
    if ((b && !b->overflow.empty()) || !ch.rx().try_push(std::move(msg))) {
      if (b) b->overflow.push_back(std::move(msg));
      continue;
    }
    ch.counters().rx_enqueued.fetch_add(1, std::memory_order_relaxed);
    ++stats_.messages_to_app;
  }
  ch.wakeup().signal();
}

std::size_t Engine::flush_deliveries() {
  std::size_t moved = 0;
  for (auto& b : channels_) {
    bool any = false;
    while (!b.event_overflow.empty() && b.channel->events().try_push(ControlEvent(b.event_overflow.front()))) {
      b.event_overflow.pop_front();
      any = true;
    }
    while (!b.overflow.empty()) {
      if (!b.channel->rx().try_push(std::move(b.overflow.front()))) break;
      b.overflow.pop_front();
      b.channel->counters().rx_enqueued.fetch_add(1, std::memory_order_relaxed);
      ++stats_.messages_to_app;
      ++moved;
      any = true;
    }
    if (any) b.channel->wakeup().signal();
  }
  return moved;
}

std::size_t Engine::drain_channel(BoundChannel& b, VirtualTime now) {
  Channel& ch = *b.channel;
  ch.note_engine_touch(id_);
  std::size_t n = 0;
  for (; n < config_.burst; ++n) {
    auto msg = ch.tx().try_pop();
    if (!msg) break;
    ch.counters().tx_dequeued.fetch_add(1, std::memory_order_relaxed);
    ++stats_.messages_from_app;
    const FlowKey key{msg->flow.remote_ip, msg->flow.local_port, msg->flow.remote_port};
    auto it = flows_.find(key);
    bool ok = it != flows_.end() && !it->second.closing && it->second.channel == b.channel;
    if (ok) {
      touch(it->second);
      try {
        it->second.state.send_message(std::move(msg->payload));
        active_tx_[key] = true;
      } catch (const Error&) {
        ok = false;
      }
    }
    if (!ok) {
      ++stats_.send_failures;
      post_event(b.channel, {EventKind::kSendFailed, 0, msg->flow, 0, now});
    }
  }
  if (n > 0) ch.space().signal();
  return n;
}

std::optional<std::uint16_t> Engine::allocate_port(Ipv4Addr remote_ip, std::uint16_t remote_port) {
  const std::uint32_t lo = config_.ephemeral_port_min + id_.index();
  if (lo > config_.ephemeral_port_max) return std::nullopt;
  const std::uint32_t slots = (config_.ephemeral_port_max - lo) / engine_count_ + 1;
  for (std::uint32_t tries = 0; tries < slots; ++tries) {
    const std::uint32_t slot = next_port_cursor_++ % slots;
    const auto port = static_cast<std::uint16_t>(lo + slot * engine_count_);
    const FlowKey key{remote_ip, port, remote_port};
    const HandshakeKey hkey{remote_ip, {port, remote_port}};
    if (flows_.contains(key) || pending_connects_.contains(hkey) || handshaker_.client_state(hkey) ||
        handshaker_.server_state(hkey) || registry_.is_listening(port)) {
      continue;
    }
    return port;
  }
  return std::nullopt;
}

void Engine::handle_request(BoundChannel& b, const ControlRequest& req, VirtualTime now) {
  switch (req.kind) {
    case ControlKind::kListen: {
      const bool ok = registry_.try_register(req.port, id_, b.channel);
      post_event(b.channel, {ok ? EventKind::kListening : EventKind::kBindFailed, req.request_id, {}, 0, now});
      break;
    }
    case ControlKind::kConnect: {
      const auto port = allocate_port(req.remote_ip, req.port);
      if (!port) {
        ++stats_.port_exhausted;
        post_event(b.channel, {EventKind::kResourceExhausted, req.request_id, {}, 0, now});
        break;
      }
      const HandshakeKey key{req.remote_ip, {*port, req.port}};
      handshaker_.initiate(req.remote_ip, key.ports, now, scratch_out_);
      pending_connects_[key] = PendingConnect{b.channel, req.request_id};
      break;
    }
    case ControlKind::kClose: {
      const FlowKey key{req.flow.remote_ip, req.flow.local_port, req.flow.remote_port};
      auto it = flows_.find(key);
      if (it == flows_.end() || it->second.channel != b.channel) break;
      it->second.closing = true;
      maybe_fin(it->second, now);
      sync_timer(key, it->second);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Transmit path

std::size_t Engine::transmit_flows(VirtualTime now) {
  std::size_t emitted = 0;
  for (auto it = active_tx_.begin(); it != active_tx_.end();) {
    auto f = flows_.find(it->first);
    if (f == flows_.end() || !f->second.state.has_unsent()) {
      it = active_tx_.erase(it);
      continue;
    }
    touch(f->second);
    emitted += f->second.state.transmit(now, scratch_out_);
    sync_timer(f->first, f->second);
    if (!f->second.state.has_unsent()) {
      it = active_tx_.erase(it);
    } else {
      ++it;
    }
  }
  return emitted;
}

std::size_t Engine::flush_tx() {
  for (auto& f : scratch_out_) tx_backlog_.push_back(std::move(f));
  scratch_out_.clear();
  stats_.tx_backlog_high_water = std::max<std::uint64_t>(stats_.tx_backlog_high_water, tx_backlog_.size());
  std::size_t sent = 0;
  while (!tx_backlog_.empty()) {
    std::vector<Frame> burst;
    const std::size_t n = std::min(config_.burst, tx_backlog_.size());
    burst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) burst.push_back(std::move(tx_backlog_[i]));
    const std::size_t accepted = nic_.tx_burst(id_, burst);
    tx_backlog_.erase(tx_backlog_.begin(), tx_backlog_.begin() + static_cast<std::ptrdiff_t>(accepted));
    // Frames the ring refused are still in `burst`; put them back.
    for (std::size_t i = accepted; i < n; ++i) tx_backlog_[i - accepted] = std::move(burst[i]);
    sent += accepted;
    if (accepted < n) break;
  }
  iter_tx_frames_ += sent;
  stats_.frames_tx += sent;
  return sent;
}

// ---------------------------------------------------------------------------
// Driver queries

std::optional<VirtualTime> Engine::next_deadline() {
  std::optional<VirtualTime> d = handshaker_.next_deadline();
  auto earliest = [&d](VirtualTime t) {
    if (!d || t < *d) d = t;
  };
  while (!flow_timers_.empty()) {
    const FlowTimer& t = flow_timers_.top();
    auto it = flows_.find(t.key);
    if (it != flows_.end() && it->second.timer_at == t.at) {
      earliest(t.at);
      break;
    }
    flow_timers_.pop();
  }
  for (const auto& b : channels_) {
    if (!b.channel->requests().empty()) {
      earliest(next_ctrl_poll_);
      break;
    }
  }
  return d;
}

bool Engine::has_pending_work() const {
  if (!tx_backlog_.empty() || !scratch_out_.empty()) return true;
  if (has_binds_.load(std::memory_order_acquire) || registry_.has_updates(id_)) return true;
  const VirtualTime now = clock_.now();
  for (const auto& b : channels_) {
    if (!b.channel->tx().empty() || !b.overflow.empty()) return true;
    if (!b.event_overflow.empty()) return true;
    if (now >= next_ctrl_poll_ && !b.channel->requests().empty()) return true;
  }
  for (const auto& [key, _] : active_tx_) {
    auto it = flows_.find(key);
    if (it != flows_.end() && it->second.state.has_unsent() && it->second.state.can_send()) return true;
  }
  return false;
}

TransportTotals Engine::transport_totals() const {
  TransportTotals t = retired_;
  for (const auto& [key, flow] : flows_) t.add(flow.state.counters(), flow.state.unacked_count());
  return t;
}

std::vector<FlowAudit> Engine::audit_flows() const {
  std::vector<FlowAudit> out;
  out.reserve(flows_.size());
  for (const auto& [key, flow] : flows_) {
    out.push_back({key, flow.state.engine(), flow.state.tx_udp(), flow.state.rx_udp(), flow.initiator, flow.attempts});
  }
  return out;
}

const FlowState* Engine::find_flow(const FlowKey& key) const {
  auto it = flows_.find(key);
  return it == flows_.end() ? nullptr : &it->second.state;
}

std::size_t Engine::pending_to_app() const {
  std::size_t n = 0;
  for (const auto& b : channels_) n += b.overflow.size();
  return n;
}

std::size_t Engine::channel_rx_high_water() const {
  std::size_t m = 0;
  for (const auto& b : channels_) m = std::max(m, b.channel->rx().high_water_mark());
  return m;
}

std::size_t Engine::channel_tx_high_water() const {
  std::size_t m = 0;
  for (const auto& b : channels_) m = std::max(m, b.channel->tx().high_water_mark());
  return m;
}

// ---------------------------------------------------------------------------

Sidecar::Sidecar(Nic& nic, const VirtualClock& clock, SidecarConfig config)
    : nic_(nic), clock_(clock), registry_(config.engines) {
  if (config.engines < 1 || config.engines != nic.num_queues()) {
    throw Error(Errc::kArgument, "engine count must equal the NIC queue count");
  }
  for (std::size_t i = 0; i < config.engines; ++i) {
    engines_.push_back(std::make_unique<Engine>(QueueId{static_cast<std::uint16_t>(i)}, config.engines, nic,
                                                clock, registry_, config.engine, mix_seed(config.seed, i)));
  }
}

Sidecar::Assignment Sidecar::assign_channel(EnginePolicy policy) {
  std::lock_guard lock(mu_);
  QueueId target;
  if (policy.kind == EnginePolicy::Kind::kPinned) {
    if (policy.pinned.index() >= engines_.size()) {
      throw Error(Errc::kArgument, "pinned engine " + std::to_string(policy.pinned.index()) + " out of range (" +
                                       std::to_string(engines_.size()) + " engines)");
    }
    target = policy.pinned;
  } else {
    target = QueueId{static_cast<std::uint16_t>(attachments_ % engines_.size())};
  }
  auto channel = std::make_shared<Channel>(target, static_cast<std::uint32_t>(attachments_));
  ++attachments_;
  engines_[target.index()]->bind_channel(channel);
  all_channels_.push_back(channel);
  return {target, channel};
}

}  // namespace lcdnet
