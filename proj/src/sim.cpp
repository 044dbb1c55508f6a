#include "lcdnet/sim.hpp"

#include <algorithm>
#include <chrono>

#include "lcdnet/errors.hpp"

namespace lcdnet {

Host::Host(HostId id, HostConfig config, Nic& nic, const VirtualClock& clock, std::uint64_t seed)
    : id_(id),
      config_(std::move(config)),
      nic_(nic),
      sidecar_(nic, clock, SidecarConfig{config_.engines, config_.engine, seed}) {}

Simulation::Simulation(FabricConfig config) : fabric_(config), seed_(config.rng_seed) {}

Simulation::~Simulation() = default;

Host& Simulation::add_host(HostConfig config) {
  if (threaded_) throw Error(Errc::kState, "cannot add hosts while threads are running");
  for (const auto& h : hosts_) {
    if (h->name() == config.name) throw Error(Errc::kArgument, "duplicate host name " + config.name);
  }
  NicConfig nic_cfg;
  nic_cfg.num_queues = config.engines;
  nic_cfg.local_ip = config.ip;
  nic_cfg.local_mac = mac_for(config.ip);
  nic_cfg.max_queues = std::max<std::size_t>(64, config.engines);
  Nic& nic = fabric_.attach_host(nic_cfg);
  const HostId id = hosts_.size();
  const std::uint64_t seed = seed_ ^ ((id + 1) * 0x100000001b3ULL);
  hosts_.push_back(std::make_unique<Host>(id, std::move(config), nic, fabric_.clock(), seed));
  Host& host = *hosts_.back();
  host.shim().init(host.sidecar(), [this](const auto& ready, auto until) { return pump(ready, until); });
  for (std::size_t e = 0; e < host.sidecar().engine_count(); ++e) {
    slots_.push_back(Slot{&host, &host.sidecar().engine(e), {}});
  }
  return host;
}

Host& Simulation::host(std::string_view name) {
  for (auto& h : hosts_) {
    if (h->name() == name) return *h;
  }
  throw Error(Errc::kArgument, "unknown host " + std::string(name));
}

void Simulation::add_poller(std::function<bool()> poller) { pollers_.push_back(std::move(poller)); }

void Simulation::settle() {
  for (;;) {
    bool progress = false;
    const VirtualTime now = fabric_.now();
    for (Slot& s : slots_) {
      if (s.busy_until > now) continue;
      const auto deadline = s.engine->next_deadline();
      const bool eligible = s.engine->has_pending_work() || fabric_.rx_pending(s.host->id(), s.engine->id()) ||
                            (deadline && *deadline <= now);
      if (!eligible) continue;
      if (s.engine->run_iteration() > 0) progress = true;
      s.busy_until = now + s.engine->last_iteration_cost();
    }
    if (fabric_.flush_tx() > 0) progress = true;
    if (fabric_.advance_to(now) > 0) progress = true;
    for (auto& p : pollers_) {
      if (p()) progress = true;
    }
    if (!progress) return;
  }
}

std::optional<VirtualTime> Simulation::next_wake() {
  const VirtualTime now = fabric_.now();
  std::optional<VirtualTime> wake = fabric_.next_event_time();
  auto consider = [&wake](VirtualTime t) {
    if (!wake || t < *wake) wake = t;
  };
  for (Slot& s : slots_) {
    std::optional<VirtualTime> t = s.engine->next_deadline();
    if (s.engine->has_pending_work() || fabric_.rx_pending(s.host->id(), s.engine->id())) t = now;
    if (t) consider(std::max(*t, s.busy_until));
  }
  if (wake && *wake <= now) wake = now + VirtualDuration{1};
  return wake;
}

bool Simulation::pump(const std::function<bool()>& ready, std::optional<VirtualTime> until) {
  settle();
  if (ready && ready()) return true;
  const auto wake = next_wake();
  if (until && *until > now() && (!wake || *wake > *until)) {
    fabric_.advance_to(*until);
    settle();
    return true;
  }
  if (!wake) return false;
  fabric_.advance_to(*wake);
  return true;
}

bool Simulation::step() {
  settle();
  const auto wake = next_wake();
  if (!wake) return false;
  fabric_.advance_to(*wake);
  return true;
}

void Simulation::run_for(VirtualDuration d) {
  const VirtualTime end = now() + d;
  for (;;) {
    settle();
    const auto wake = next_wake();
    if (!wake || *wake > end) {
      fabric_.advance_to(end);
      settle();
      return;
    }
    fabric_.advance_to(*wake);
  }
}

bool Simulation::run_until(const std::function<bool()>& done, VirtualDuration limit) {
  const VirtualTime end = now() + limit;
  for (;;) {
    settle();
    if (done()) return true;
    const auto wake = next_wake();
    if (!wake || *wake > end) {
      fabric_.advance_to(end);
      settle();
      return done();
    }
    fabric_.advance_to(*wake);
  }
}

SimulationAudit Simulation::audit() const {
  SimulationAudit a;
  a.fabric = fabric_.stats();
  if (!a.fabric.balanced()) a.problems.push_back("fabric frame conservation does not balance");
  for (const auto& h : hosts_) {
    const Sidecar& sc = h->sidecar();
    for (std::size_t e = 0; e < sc.engine_count(); ++e) {
      const Engine& eng = sc.engine(e);
      const auto t = eng.transport_totals();
      a.transport.fragments_first_sent += t.fragments_first_sent;
      a.transport.fragments_retransmitted += t.fragments_retransmitted;
      a.transport.fragments_acked += t.fragments_acked;
      a.transport.fragments_unacked += t.fragments_unacked;
      a.transport.fast_retransmits += t.fast_retransmits;
      a.transport.rto_fired += t.rto_fired;
      a.transport.duplicates += t.duplicates;
      a.transport.out_of_window += t.out_of_window;
      a.transport.protocol_errors += t.protocol_errors;
      a.transport.messages_delivered += t.messages_delivered;
      a.foreign_flow_touches += eng.foreign_flow_touches();
      for (const auto& f : eng.audit_flows()) {
        if (f.engine != eng.id()) a.problems.push_back(h->name() + ": flow owned by a different engine");
      }
    }
    for (const auto& ch : sc.channels()) {
      a.foreign_channel_touches += ch->foreign_touches();
      const auto& c = ch->counters();
      if (c.tx_enqueued.load() != c.tx_dequeued.load() + ch->tx().size()) {
        a.problems.push_back(h->name() + ": channel tx counters do not balance");
      }
      if (c.rx_enqueued.load() != c.rx_dequeued.load() + ch->rx().size()) {
        a.problems.push_back(h->name() + ": channel rx counters do not balance");
      }
    }
  }
  if (!a.transport.balanced()) a.problems.push_back("transport fragment conservation does not balance");
  if (a.foreign_channel_touches) a.problems.push_back("a channel was touched by a foreign engine");
  if (a.foreign_flow_touches) a.problems.push_back("a flow was touched by a foreign engine");
  return a;
}

// ---------------------------------------------------------------------------

ThreadedRuntime::ThreadedRuntime(Simulation& sim) : sim_(sim) {}

ThreadedRuntime::~ThreadedRuntime() { stop(); }

void ThreadedRuntime::start() {
  if (running_.exchange(true)) return;
  sim_.threaded_ = true;
  for (auto& h : sim_.hosts_) h->shim().set_pump({});
  for (auto& slot : sim_.slots_) {
    Engine* engine = slot.engine;
    threads_.emplace_back([this, engine] {
      while (running_.load(std::memory_order_relaxed)) {
        if (engine->run_iteration() == 0) std::this_thread::yield();
      }
    });
  }
  threads_.emplace_back([this] {
    Fabric& fabric = sim_.fabric_;
    const auto origin = std::chrono::steady_clock::now();
    const VirtualTime base = fabric.now();
    while (running_.load(std::memory_order_relaxed)) {
      const auto elapsed = std::chrono::steady_clock::now() - origin;
      fabric.flush_tx();
      fabric.advance_to(base + std::chrono::duration_cast<VirtualDuration>(elapsed));
      std::this_thread::yield();
    }
  });
}

void ThreadedRuntime::stop() {
  if (!running_.exchange(false)) return;
  for (auto& t : threads_) t.join();
  threads_.clear();
  sim_.threaded_ = false;
  for (auto& h : sim_.hosts_) h->shim().set_pump([this](const auto& ready, auto until) { return sim_.pump(ready, until); });
}

}  // namespace lcdnet
