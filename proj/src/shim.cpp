#include "lcdnet/shim.hpp"

#include <thread>

#include "lcdnet/wire.hpp"

namespace lcdnet {

AppChannel::AppChannel(std::shared_ptr<Channel> channel, std::shared_ptr<detail::ShimContext> ctx)
    : channel_(std::move(channel)), ctx_(std::move(ctx)) {}

void AppChannel::drain_events() {
  while (auto ev = channel_->events().try_pop()) {
    switch (ev->kind) {
      case EventKind::kListening:
      case EventKind::kBindFailed:
        listens_[ev->request_id] = ev->kind;
        break;
      case EventKind::kConnected:
        connects_[ev->request_id] = ConnectOutcome{true, ev->flow, ev->attempts, Errc::kConnect, ev->at};
        break;
      case EventKind::kConnectFailed:
        connects_[ev->request_id] = ConnectOutcome{false, ev->flow, ev->attempts, Errc::kConnect, ev->at};
        break;
      case EventKind::kResourceExhausted:
        connects_[ev->request_id] = ConnectOutcome{false, ev->flow, 0, Errc::kResource, ev->at};
        break;
      case EventKind::kFlowReset:
      case EventKind::kFlowClosed:
      case EventKind::kSendFailed:
        dead_flows_.insert(ev->flow.pack());
        events_.push_back(*ev);
        break;
      case EventKind::kAccepted:
        events_.push_back(*ev);
        break;
    }
  }
}

bool AppChannel::wait_until(const std::function<bool()>& ready, Wakeup& wakeup,
                            std::optional<VirtualDuration> timeout, bool count_recv) {
  if (ctx_->pump) {
    const VirtualClock& clock = ctx_->sidecar->clock();
    std::optional<VirtualTime> deadline;
    if (timeout) deadline = clock.now() + *timeout;
    for (;;) {
      if (ready()) return true;
      if (deadline && clock.now() >= *deadline) return false;
      if (!ctx_->pump(ready, deadline)) return ready();
    }
  }
  std::optional<std::chrono::steady_clock::time_point> deadline;
  if (timeout) deadline = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::nanoseconds>(*timeout);
  const auto r = wakeup.wait(ready, deadline);
  if (count_recv) {
    stats_.sleeps += r.sleeps;
    stats_.empty_wakeups += r.empty_wakeups;
  }
  return r.ready;
}

void AppChannel::submit(ControlRequest req) {
  while (!channel_->requests().try_push(ControlRequest(req))) {
    if (ctx_->pump) {
      if (!ctx_->pump([&] { return !channel_->requests().full(); }, std::nullopt)) {
        throw Error(Errc::kResource, "control queue full and simulation idle");
      }
    } else {
      std::this_thread::yield();
    }
  }
}

void AppChannel::listen(std::uint16_t port, std::optional<VirtualDuration> timeout) {
  const auto id = ctx_->next_request_id.fetch_add(1);
  submit({ControlKind::kListen, id, {}, port, {}});
  const bool done = wait_until(
      [&] {
        drain_events();
        return listens_.contains(id);
      },
      channel_->wakeup(), timeout, false);
  if (!done) throw Error(Errc::kTimeout, "listen request timed out");
  const EventKind result = listens_[id];
  listens_.erase(id);
  if (result == EventKind::kBindFailed) throw Error(Errc::kBind, "port " + std::to_string(port) + " already bound");
}

std::uint64_t AppChannel::connect_async(Ipv4Addr remote_ip, std::uint16_t remote_port) {
  const auto id = ctx_->next_request_id.fetch_add(1);
  submit({ControlKind::kConnect, id, remote_ip, remote_port, {}});
  return id;
}

std::optional<ConnectOutcome> AppChannel::poll_connect(std::uint64_t ticket) {
  drain_events();
  auto it = connects_.find(ticket);
  if (it == connects_.end()) return std::nullopt;
  ConnectOutcome out = it->second;
  connects_.erase(it);
  return out;
}

FlowHandle AppChannel::connect(Ipv4Addr remote_ip, std::uint16_t remote_port, std::optional<VirtualDuration> timeout) {
  const auto ticket = connect_async(remote_ip, remote_port);
  const bool done = wait_until(
      [&] {
        drain_events();
        return connects_.contains(ticket);
      },
      channel_->wakeup(), timeout, false);
  if (!done) throw Error(Errc::kTimeout, "connect timed out");
  const ConnectOutcome out = *poll_connect(ticket);
  if (out.ok) return out.flow;
  if (out.error == Errc::kResource) throw Error(Errc::kResource, "no free local port");
  throw ConnectError("handshake failed after " + std::to_string(out.attempts) + " attempts", out.attempts);
}

void AppChannel::check_send(FlowHandle flow, std::span<const std::uint8_t> payload) {
  if (payload.empty() || payload.size() > kMaxMessageSize) {
    throw Error(Errc::kSize, "message size " + std::to_string(payload.size()) + " outside [1, 8 MiB]");
  }
  drain_events();
  if (dead_flows_.contains(flow.pack())) throw Error(Errc::kFlow, "flow is closed or reset");
}

bool AppChannel::try_send(FlowHandle flow, std::span<const std::uint8_t> payload) {
  check_send(flow, payload);
  if (!channel_->tx().try_push(Message{flow, {payload.begin(), payload.end()}})) return false;
  channel_->counters().tx_enqueued.fetch_add(1, std::memory_order_relaxed);
  return true;
}

void AppChannel::send(FlowHandle flow, std::span<const std::uint8_t> payload) {
  check_send(flow, payload);
  Message msg{flow, {payload.begin(), payload.end()}};
  if (!channel_->tx().try_push(std::move(msg))) {
    channel_->counters().tx_blocked.fetch_add(1, std::memory_order_relaxed);
    for (;;) {
      wait_until([&] { return !channel_->tx().full(); }, channel_->space(), std::nullopt, false);
      if (channel_->tx().try_push(std::move(msg))) break;
      if (ctx_->pump && channel_->tx().full()) throw Error(Errc::kResource, "channel full and simulation idle");
    }
  }
  channel_->counters().tx_enqueued.fetch_add(1, std::memory_order_relaxed);
}

std::optional<Message> AppChannel::recv(RecvMode mode, std::optional<VirtualDuration> timeout) {
  if (mode == RecvMode::kBlocking) {
    wait_until([&] { return !channel_->rx().empty(); }, channel_->wakeup(), timeout, true);
  }
  auto msg = channel_->rx().try_pop();
  if (!msg) {
    if (mode == RecvMode::kNonBlocking) ++stats_.empty_polls;
    return std::nullopt;
  }
  channel_->counters().rx_dequeued.fetch_add(1, std::memory_order_relaxed);
  return msg;
}

void AppChannel::close(FlowHandle flow) {
  drain_events();
  if (dead_flows_.contains(flow.pack())) return;
  submit({ControlKind::kClose, 0, {}, 0, flow});
  dead_flows_.insert(flow.pack());
}

std::vector<ControlEvent> AppChannel::take_events() {
  drain_events();
  std::vector<ControlEvent> out(events_.begin(), events_.end());
  events_.clear();
  return out;
}

// ---------------------------------------------------------------------------

void Shim::init(Sidecar& sidecar, PumpFn pump) {
  ctx_ = std::make_shared<detail::ShimContext>();
  ctx_->sidecar = &sidecar;
  ctx_->pump = std::move(pump);
}

AppChannel Shim::attach(EnginePolicy policy) {
  if (!ctx_) throw Error(Errc::kState, "attach called before init");
  auto assignment = ctx_->sidecar->assign_channel(policy);
  return AppChannel(std::move(assignment.channel), ctx_);
}

void Shim::set_pump(PumpFn pump) {
  if (!ctx_) throw Error(Errc::kState, "set_pump called before init");
  ctx_->pump = std::move(pump);
}

}  // namespace lcdnet
