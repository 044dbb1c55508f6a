#pragma once

// Scenario harnesses: echo, connection setup, isolation, and blocking receive,
// configured from a small TOML-like file and reported as CSV.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lcdnet/engine.hpp"
#include "lcdnet/fabric.hpp"
#include "lcdnet/rssminus.hpp"

namespace lcdnet::bench {

struct HostSpec {
  std::string name;
  Ipv4Addr ip;
  std::size_t engines = 1;
};

enum class WorkloadKind : std::uint8_t { kEcho, kConnSetup, kIsolation, kBlocking };

struct EchoWorkload {
  std::string client;
  std::string server;
  std::size_t msg_size = 64;
  std::size_t inflight = 1;
  std::size_t count = 1000;
  std::uint16_t port = 8000;
};

struct EnginePair {
  std::size_t client = 1;
  std::size_t server = 1;
};

struct ConnSetupWorkload {
  std::vector<EnginePair> pairs{{1, 1}, {2, 2}, {4, 4}, {8, 8}};
  std::size_t trials = 1000;
  std::size_t world_size = 100;  // handshakes per fresh fabric (fresh RSS key)
  std::vector<SprayMode> modes{SprayMode::kOptimized};
};

struct IsolationWorkload {
  std::string client;
  std::string server;
  std::size_t bulk_flows = 3;
  std::size_t bulk_size = 16384;
  std::size_t bulk_inflight = 4;
  std::size_t probe_count = 2000;
  std::size_t probe_size = 64;
  VirtualDuration probe_interval = std::chrono::microseconds(50);
};

enum class BlockingMode : std::uint8_t { kBlocking, kPolling };

struct BlockingWorkload {
  std::string client;
  std::string server;
  std::size_t threads = 4;
  std::size_t requests = 1000;
  std::vector<BlockingMode> modes{BlockingMode::kBlocking, BlockingMode::kPolling};
};

struct Scenario {
  std::uint64_t seed = 1;
  FabricConfig fabric;
  EngineConfig engine;
  std::vector<HostSpec> hosts;
  WorkloadKind kind = WorkloadKind::kEcho;
  EchoWorkload echo;
  ConnSetupWorkload conn_setup;
  IsolationWorkload isolation;
  BlockingWorkload blocking;
};

/// Throws ConfigError carrying the offending line number.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

struct Percentiles {
  std::size_t count = 0;
  double p50 = 0;
  double p99 = 0;
  double p999 = 0;
  double mean = 0;
  double max = 0;
};

/// Nearest-rank percentiles.
Percentiles percentiles(std::vector<double> samples);

struct RunResult {
  std::string samples_csv;  // one row per measured operation
  std::string summary_csv;  // metric,value
  std::string engines_csv;  // per-engine counters
  std::string fabric_csv;   // per-queue fabric counters
  std::vector<std::string> problems;  // invariant violations

  bool ok() const { return problems.empty(); }
};

RunResult run_scenario(const Scenario& scenario);

/// n,p,naive,optimized_per_side,optimized_exact_per_side,optimized_total_floor2x
std::string formula_table(const std::vector<std::uint32_t>& engines, double p);

}  // namespace lcdnet::bench
