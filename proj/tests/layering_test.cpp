// The stack must reach the network only through the Nic interface: no stack
// source may include the fabric or its verification oracle.

#include <filesystem>
#include <fstream>
#include <regex>
#include <string>

#include "doctest.h"

namespace {

std::vector<std::string> includes_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  const std::regex inc(R"re(^\s*#\s*include\s*[<"]([^>"]+)[>"])re");
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, inc)) out.push_back(m[1]);
  }
  return out;
}

const std::filesystem::path kRoot = LCDNET_SOURCE_DIR;

}  // namespace

TEST_CASE("stack modules include neither the fabric nor the oracle") {
  const char* stack[] = {"include/lcdnet/lcd_nic.hpp", "include/lcdnet/wire.hpp",    "include/lcdnet/rssminus.hpp",
                         "include/lcdnet/transport.hpp", "include/lcdnet/channel.hpp", "include/lcdnet/engine.hpp",
                         "include/lcdnet/shim.hpp",      "src/wire.cpp",               "src/rssminus.cpp",
                         "src/transport.cpp",            "src/channel.cpp",            "src/engine.cpp",
                         "src/shim.cpp"};
  for (const char* file : stack) {
    CAPTURE(file);
    REQUIRE(std::filesystem::exists(kRoot / file));
    for (const auto& inc : includes_of(kRoot / file)) {
      CAPTURE(inc);
      CHECK(inc.find("fabric") == std::string::npos);
    }
  }
}

TEST_CASE("only tests include the oracle") {
  for (const auto* dir : {"src", "include", "tools"}) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(kRoot / dir)) {
      if (!e.is_regular_file()) continue;
      const auto name = e.path().filename().string();
      if (name == "fabric_oracle.hpp" || name == "fabric.cpp") continue;
      CAPTURE(e.path().string());
      for (const auto& inc : includes_of(e.path())) CHECK(inc.find("fabric_oracle") == std::string::npos);
    }
  }
}
