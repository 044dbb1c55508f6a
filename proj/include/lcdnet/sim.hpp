#pragma once

// Drivers that run hosts, engines, and the fabric together.
//
// Simulation is the deterministic driver: a single thread steps every engine
// whose virtual busy period has ended, flushes TX rings into the fabric, runs
// application pollers, and then jumps the virtual clock to the next event.
// ThreadedRuntime runs the same engines on real threads, one per engine, with a
// fabric thread tying the virtual clock to elapsed wall time.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "lcdnet/engine.hpp"
#include "lcdnet/fabric.hpp"
#include "lcdnet/shim.hpp"

namespace lcdnet {

struct HostConfig {
  std::string name;
  Ipv4Addr ip;
  std::size_t engines = 1;
  EngineConfig engine;
};

class Host {
 public:
  Host(HostId id, HostConfig config, Nic& nic, const VirtualClock& clock, std::uint64_t seed);

  HostId id() const { return id_; }
  const std::string& name() const { return config_.name; }
  Ipv4Addr ip() const { return config_.ip; }
  const HostConfig& config() const { return config_; }
  Nic& nic() { return nic_; }
  Sidecar& sidecar() { return sidecar_; }
  const Sidecar& sidecar() const { return sidecar_; }
  Shim& shim() { return shim_; }

 private:
  HostId id_;
  HostConfig config_;
  Nic& nic_;
  Sidecar sidecar_;
  Shim shim_;
};

struct SimulationAudit {
  FabricStats fabric;
  TransportTotals transport;
  std::uint64_t foreign_channel_touches = 0;
  std::uint64_t foreign_flow_touches = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

class Simulation {
 public:
  explicit Simulation(FabricConfig config);
  ~Simulation();

  Host& add_host(HostConfig config);
  Host& host(std::string_view name);
  Host& host(std::size_t index) { return *hosts_.at(index); }
  std::size_t host_count() const { return hosts_.size(); }

  Fabric& fabric() { return fabric_; }
  const Fabric& fabric() const { return fabric_; }
  VirtualTime now() const { return fabric_.now(); }

  /// Runs engines, fabric deliveries due now, and pollers until nothing more
  /// can happen at the current instant.
  void settle();
  /// settle(), then advance to the next event. False if nothing is scheduled.
  bool step();
  /// settle(); unless `ready()` then holds, advance to the next event or to
  /// `until`, whichever is first. False if nothing is scheduled and there is
  /// no `until` left to wait for.
  bool pump(const std::function<bool()>& ready, std::optional<VirtualTime> until);
  void run_for(VirtualDuration d);
  /// Steps until `done()` or `limit` of virtual time passes; returns done().
  bool run_until(const std::function<bool()>& done, VirtualDuration limit);

  /// Application logic called on every settle round; returns true if it did work.
  void add_poller(std::function<bool()> poller);
  void clear_pollers() { pollers_.clear(); }
  void schedule(VirtualTime at, std::function<void()> callback) { fabric_.schedule(at, std::move(callback)); }

  /// Conservation and shared-nothing checks over the whole run so far.
  SimulationAudit audit() const;

 private:
  friend class ThreadedRuntime;
  struct Slot {
    Host* host;
    Engine* engine;
    VirtualTime busy_until{};
  };

  std::optional<VirtualTime> next_wake();

  Fabric fabric_;
  std::vector<std::unique_ptr<Host>> hosts_;
  std::vector<Slot> slots_;
  std::vector<std::function<bool()>> pollers_;
  bool threaded_ = false;
  std::uint64_t seed_ = 1;
};

class ThreadedRuntime {
 public:
  explicit ThreadedRuntime(Simulation& sim);
  ~ThreadedRuntime();
  ThreadedRuntime(const ThreadedRuntime&) = delete;
  ThreadedRuntime& operator=(const ThreadedRuntime&) = delete;

  void start();
  void stop();
  bool running() const { return running_.load(); }

 private:
  Simulation& sim_;
  std::atomic<bool> running_{false};
  std::vector<std::thread> threads_;
};

}  // namespace lcdnet
