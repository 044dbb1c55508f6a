#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace lcdnet {

enum class Errc : int {
  kArgument = 1,
  kState,
  kBind,
  kConnect,
  kFlow,
  kSize,
  kResource,
  kTimeout,
  kConfig,
  kInvariant,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Handshake gave up; carries how many spray attempts were made.
class ConnectError : public Error {
 public:
  ConnectError(const std::string& what, std::uint32_t attempts)
      : Error(Errc::kConnect, what), attempts_(attempts) {}

  std::uint32_t attempts() const noexcept { return attempts_; }

 private:
  std::uint32_t attempts_;
};

/// Scenario/config file problem; `line` is 1-based, 0 when not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : Error(Errc::kConfig, line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lcdnet
