#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lcdnet/sim.hpp"

namespace lcdnet::testing {

inline const Ipv4Addr kClientIp = Ipv4Addr::from_octets(10, 0, 0, 1);
inline const Ipv4Addr kServerIp = Ipv4Addr::from_octets(10, 0, 0, 2);

struct TwoHosts {
  Simulation sim;
  Host* client;
  Host* server;

  explicit TwoHosts(FabricConfig fc, std::size_t client_engines = 1, std::size_t server_engines = 1,
                    EngineConfig ec = {})
      : sim(std::move(fc)) {
    client = &sim.add_host({"client", kClientIp, client_engines, ec});
    server = &sim.add_host({"server", kServerIp, server_engines, ec});
  }
};

inline FabricConfig seeded(std::uint64_t seed) {
  FabricConfig fc;
  fc.rng_seed = seed;
  return fc;
}

inline std::vector<std::uint8_t> pattern(std::size_t n, std::uint64_t seed) {
  std::vector<std::uint8_t> v(n);
  std::mt19937_64 rng(seed);
  for (auto& b : v) b = static_cast<std::uint8_t>(rng());
  return v;
}

}  // namespace lcdnet::testing
