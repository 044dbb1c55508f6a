// lcdnet_cli: scenario runner and handshake batch tables.
//
//   lcdnet_cli run scenario.conf --seed 7 --out results.csv
//   lcdnet_cli formulas --n 1,2,4,8 --p 0.95
//
// Exit status: 0 ok, 1 usage or I/O, 2 bad scenario file, 3 invariant violated.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcdnet/lcdnet.h"

namespace {

int exit_code(lcdnet_status s) {
  switch (s) {
    case LCDNET_OK: return 0;
    case LCDNET_ERR_CONFIG: return 2;
    case LCDNET_ERR_INVARIANT: return 3;
    default: return 1;
  }
}

int report(lcdnet_status s) {
  if (s != LCDNET_OK) std::fprintf(stderr, "error (%s): %s\n", lcdnet_status_str(s), lcdnet_last_error());
  return exit_code(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lcdnet scenario runner"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a scenario file and write CSV results");
  std::string config;
  std::string out = "results.csv";
  std::uint64_t seed = 0;
  run->add_option("config", config, "scenario file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out, "samples CSV; siblings get .summary/.engines/.fabric suffixes");

  auto* formulas = app.add_subcommand("formulas", "print SYN batch sizes per engine count");
  std::vector<std::uint32_t> engines{1, 2, 4, 8};
  double p = 0.95;
  formulas->add_option("--n", engines, "engine counts")->delimiter(',')->check(CLI::PositiveNumber);
  formulas->add_option("--p", p, "target success probability")->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    const lcdnet_status s = lcdnet_run_scenario(config.c_str(), *seed_opt ? &seed : nullptr, out.c_str());
    if (s == LCDNET_OK) std::printf("wrote %s\n", out.c_str());
    return report(s);
  }

  char* csv = nullptr;
  const lcdnet_status s = lcdnet_formula_table(engines.data(), engines.size(), p, &csv);
  if (s == LCDNET_OK) {
    std::fputs(csv, stdout);
    lcdnet_free(csv);
  }
  return report(s);
}
