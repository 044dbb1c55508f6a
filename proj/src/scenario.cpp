// Scenario file parsing. The format is a small TOML subset:
//
//   # comment
//   seed = 42
//   [fabric]
//   loss = 0.02
//   [host.client]
//   ip = "10.0.0.1"
//   engines = 4
//   [workload]
//   type = "echo"
//
// Unknown sections and keys are errors, so typos surface with a line number.

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lcdnet/bench.hpp"
#include "lcdnet/errors.hpp"
#include "lcdnet/wire.hpp"

namespace lcdnet::bench {
namespace {

struct Value {
  std::string text;
  bool quoted = false;
  std::size_t line = 0;
};

class Section {
 public:
  Section() = default;
  Section(std::string name, std::size_t line) : name_(std::move(name)), line_(line) {}

  const std::string& name() const { return name_; }
  std::size_t line() const { return line_; }

  void add(const std::string& key, Value v) {
    if (values_.contains(key)) throw ConfigError(v.line, "duplicate key '" + key + "'");
    values_.emplace(key, std::move(v));
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::optional<std::string> str(const std::string& key) {
    const Value* v = take(key);
    if (!v) return std::nullopt;
    return v->text;
  }

  std::optional<std::uint64_t> uint(const std::string& key) {
    const Value* v = take(key);
    if (!v) return std::nullopt;
    std::uint64_t out = 0;
    const auto* end = v->text.data() + v->text.size();
    auto [p, ec] = std::from_chars(v->text.data(), end, out);
    if (v->quoted || ec != std::errc() || p != end) {
      throw ConfigError(v->line, "'" + key + "' expects a non-negative integer, got '" + v->text + "'");
    }
    return out;
  }

  std::optional<double> real(const std::string& key) {
    const Value* v = take(key);
    if (!v) return std::nullopt;
    double out = 0;
    const auto* end = v->text.data() + v->text.size();
    auto [p, ec] = std::from_chars(v->text.data(), end, out);
    if (v->quoted || ec != std::errc() || p != end) {
      throw ConfigError(v->line, "'" + key + "' expects a number, got '" + v->text + "'");
    }
    return out;
  }

  std::optional<bool> boolean(const std::string& key) {
    const Value* v = take(key);
    if (!v) return std::nullopt;
    if (!v->quoted && v->text == "true") return true;
    if (!v->quoted && v->text == "false") return false;
    throw ConfigError(v->line, "'" + key + "' expects true or false, got '" + v->text + "'");
  }

  std::size_t line_of(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? line_ : it->second.line;
  }

  /// Any key nobody asked for is a typo or an unsupported option.
  void reject_unused() const {
    for (const auto& [key, v] : values_) {
      if (!used_.contains(key)) {
        throw ConfigError(v.line, "unknown key '" + key + "'" + (name_.empty() ? "" : " in [" + name_ + "]"));
      }
    }
  }

 private:
  const Value* take(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  std::string name_;
  std::size_t line_ = 0;
  std::map<std::string, Value> values_;
  std::set<std::string> used_;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_')) {
      return false;
    }
  }
  return true;
}

struct Document {
  Section root{"", 0};
  std::vector<Section> sections;
};

Document tokenize(std::string_view text) {
  Document doc;
  Section* current = &doc.root;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view raw = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;

    // Strip a trailing comment, ignoring '#' inside quotes.
    bool in_quotes = false;
    std::size_t cut = raw.size();
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') in_quotes = !in_quotes;
      if (raw[i] == '#' && !in_quotes) {
        cut = i;
        break;
      }
    }
    const std::string_view line = trim(raw.substr(0, cut));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(line_no, "unterminated section header");
      std::string name(trim(line.substr(1, line.size() - 2)));
      const bool known = name == "fabric" || name == "engine" || name == "workload" ||
                         (name.rfind("host.", 0) == 0 && valid_key(std::string_view(name).substr(5)));
      if (!known) throw ConfigError(line_no, "unknown section [" + name + "]");
      if (!seen.insert(name).second) throw ConfigError(line_no, "duplicate section [" + name + "]");
      doc.sections.emplace_back(name, line_no);
      current = &doc.sections.back();
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    std::string_view val = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError(line_no, "invalid key '" + key + "'");
    if (val.empty()) throw ConfigError(line_no, "missing value for '" + key + "'");
    Value v;
    v.line = line_no;
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"') throw ConfigError(line_no, "unterminated string");
      v.text = std::string(val.substr(1, val.size() - 2));
      v.quoted = true;
    } else {
      v.text = std::string(val);
    }
    current->add(key, std::move(v));
  }
  return doc;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.emplace_back(trim(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::size_t parse_count(const std::string& s, std::size_t line, const char* what) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || out == 0) {
    throw ConfigError(line, std::string("invalid ") + what + " '" + s + "'");
  }
  return out;
}

SprayMode parse_mode(const std::string& s, std::size_t line) {
  if (s == "naive") return SprayMode::kNaive;
  if (s == "optimized") return SprayMode::kOptimized;
  throw ConfigError(line, "mode must be naive or optimized, got '" + s + "'");
}

void apply_fabric(Section& s, Scenario& sc) {
  if (auto v = s.real("loss")) sc.fabric.loss_probability = *v;
  if (auto v = s.real("reorder")) sc.fabric.reorder_probability = *v;
  if (auto v = s.uint("base_delay_us")) sc.fabric.base_delay = std::chrono::microseconds(*v);
  if (auto v = s.uint("jitter_us")) sc.fabric.delay_jitter = std::chrono::microseconds(*v);
  if (auto v = s.boolean("hash_byteswap")) sc.fabric.hash_byteswap = *v;
  if (!(sc.fabric.loss_probability >= 0 && sc.fabric.loss_probability <= 1)) {
    throw ConfigError(s.line_of("loss"), "loss must be in [0, 1]");
  }
  if (!(sc.fabric.reorder_probability >= 0 && sc.fabric.reorder_probability <= 1)) {
    throw ConfigError(s.line_of("reorder"), "reorder must be in [0, 1]");
  }
}

void apply_engine(Section& s, Scenario& sc) {
  EngineConfig& e = sc.engine;
  if (auto v = s.uint("burst")) {
    if (*v == 0) throw ConfigError(s.line_of("burst"), "burst must be positive");
    e.burst = *v;
  }
  if (auto v = s.uint("ctrl_poll_us")) {
    if (*v == 0) throw ConfigError(s.line_of("ctrl_poll_us"), "ctrl_poll_us must be positive");
    e.ctrl_poll_interval = std::chrono::microseconds(*v);
  }
  if (auto v = s.str("handshake_mode")) e.handshake.mode = parse_mode(*v, s.line_of("handshake_mode"));
  if (auto v = s.real("target_probability")) {
    if (!(*v > 0 && *v < 1)) throw ConfigError(s.line_of("target_probability"), "target_probability must be in (0, 1)");
    e.handshake.target_probability = *v;
  }
  if (auto v = s.uint("retry_timeout_ms")) e.handshake.retry_timeout = std::chrono::milliseconds(*v);
  if (auto v = s.uint("max_attempts")) {
    if (*v == 0) throw ConfigError(s.line_of("max_attempts"), "max_attempts must be positive");
    e.handshake.max_attempts = static_cast<std::uint32_t>(*v);
  }
  if (auto v = s.boolean("sack")) e.transport.sack_enabled = *v;
  if (auto v = s.uint("rto_base_us")) e.transport.rto_base = std::chrono::microseconds(*v);
  if (auto v = s.uint("per_frame_ns")) {
    e.cost.per_rx_frame = std::chrono::nanoseconds(*v);
    e.cost.per_tx_frame = std::chrono::nanoseconds(*v);
  }
  if (auto v = s.uint("per_message_ns")) e.cost.per_app_message = std::chrono::nanoseconds(*v);
}

void apply_host(Section& s, Scenario& sc) {
  HostSpec h;
  h.name = s.name().substr(5);
  const auto ip = s.str("ip");
  if (!ip) throw ConfigError(s.line(), "[" + s.name() + "] needs an ip");
  try {
    h.ip = Ipv4Addr::parse(*ip);
  } catch (const Error&) {
    throw ConfigError(s.line_of("ip"), "invalid IPv4 address '" + *ip + "'");
  }
  if (auto v = s.uint("engines")) {
    if (*v < 1 || *v > 64) throw ConfigError(s.line_of("engines"), "engines must be in [1, 64]");
    h.engines = *v;
  }
  for (const auto& other : sc.hosts) {
    if (other.ip == h.ip) throw ConfigError(s.line_of("ip"), "address " + *ip + " used by two hosts");
  }
  sc.hosts.push_back(h);
}

std::string host_ref(Section& s, const char* key, const Scenario& sc, std::size_t fallback) {
  if (auto v = s.str(key)) {
    for (const auto& h : sc.hosts) {
      if (h.name == *v) return *v;
    }
    throw ConfigError(s.line_of(key), std::string(key) + " refers to undefined host '" + *v + "'");
  }
  if (sc.hosts.size() <= fallback) {
    throw ConfigError(s.line(), "workload needs at least " + std::to_string(fallback + 1) + " [host.*] sections");
  }
  return sc.hosts[fallback].name;
}

void apply_workload(Section& s, Scenario& sc) {
  const auto type = s.str("type");
  if (!type) throw ConfigError(s.line(), "[workload] needs a type");
  if (*type == "echo") {
    sc.kind = WorkloadKind::kEcho;
    auto& w = sc.echo;
    w.client = host_ref(s, "client", sc, 0);
    w.server = host_ref(s, "server", sc, 1);
    if (auto v = s.uint("msg_size")) w.msg_size = *v;
    if (auto v = s.uint("inflight")) w.inflight = *v;
    if (auto v = s.uint("count")) w.count = *v;
    if (auto v = s.uint("port")) w.port = static_cast<std::uint16_t>(*v);
    if (w.msg_size < 1 || w.msg_size > kMaxMessageSize) throw ConfigError(s.line_of("msg_size"), "msg_size must be in [1, 8 MiB]");
    if (w.inflight < 1) throw ConfigError(s.line_of("inflight"), "inflight must be positive");
  } else if (*type == "conn_setup") {
    sc.kind = WorkloadKind::kConnSetup;
    auto& w = sc.conn_setup;
    if (auto v = s.str("pairs")) {
      w.pairs.clear();
      for (const auto& item : split(*v, ',')) {
        const auto parts = split(item, 'x');
        if (parts.size() != 2) throw ConfigError(s.line_of("pairs"), "pair '" + item + "' is not CxS");
        EnginePair p{parse_count(parts[0], s.line_of("pairs"), "engine count"),
                     parse_count(parts[1], s.line_of("pairs"), "engine count")};
        if (p.client > 64 || p.server > 64) throw ConfigError(s.line_of("pairs"), "engine counts are limited to 64");
        w.pairs.push_back(p);
      }
    }
    if (auto v = s.uint("trials")) w.trials = *v;
    if (auto v = s.uint("world_size")) {
      if (*v == 0) throw ConfigError(s.line_of("world_size"), "world_size must be positive");
      w.world_size = *v;
    }
    if (auto v = s.str("mode")) {
      if (*v == "both") {
        w.modes = {SprayMode::kNaive, SprayMode::kOptimized};
      } else {
        w.modes = {parse_mode(*v, s.line_of("mode"))};
      }
    }
  } else if (*type == "isolation") {
    sc.kind = WorkloadKind::kIsolation;
    auto& w = sc.isolation;
    w.client = host_ref(s, "client", sc, 0);
    w.server = host_ref(s, "server", sc, 1);
    if (auto v = s.uint("bulk_flows")) w.bulk_flows = *v;
    if (auto v = s.uint("bulk_size")) w.bulk_size = *v;
    if (auto v = s.uint("bulk_inflight")) w.bulk_inflight = *v;
    if (auto v = s.uint("probe_count")) w.probe_count = *v;
    if (auto v = s.uint("probe_size")) w.probe_size = *v;
    if (auto v = s.uint("probe_interval_us")) w.probe_interval = std::chrono::microseconds(*v);
    if (w.bulk_size < 1 || w.bulk_size > kMaxMessageSize) throw ConfigError(s.line_of("bulk_size"), "bulk_size must be in [1, 8 MiB]");
    if (w.probe_size < 8 || w.probe_size > kMaxMessageSize) throw ConfigError(s.line_of("probe_size"), "probe_size must be in [8, 8 MiB]");
    for (const auto& h : sc.hosts) {
      if ((h.name == w.client || h.name == w.server) && h.engines < 2) {
        throw ConfigError(s.line(), "isolation needs at least 2 engines on host '" + h.name + "'");
      }
    }
  } else if (*type == "blocking") {
    sc.kind = WorkloadKind::kBlocking;
    auto& w = sc.blocking;
    w.client = host_ref(s, "client", sc, 0);
    w.server = host_ref(s, "server", sc, 1);
    if (auto v = s.uint("threads")) w.threads = *v;
    if (auto v = s.uint("requests")) w.requests = *v;
    if (w.threads < 1) throw ConfigError(s.line_of("threads"), "threads must be positive");
    if (auto v = s.str("mode")) {
      if (*v == "both") {
        w.modes = {BlockingMode::kBlocking, BlockingMode::kPolling};
      } else if (*v == "blocking") {
        w.modes = {BlockingMode::kBlocking};
      } else if (*v == "polling") {
        w.modes = {BlockingMode::kPolling};
      } else {
        throw ConfigError(s.line_of("mode"), "mode must be blocking, polling, or both");
      }
    }
  } else {
    throw ConfigError(s.line_of("type"), "unknown workload type '" + *type + "'");
  }
  s.reject_unused();
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Document doc = tokenize(text);
  Scenario sc;
  if (auto v = doc.root.uint("seed")) sc.seed = *v;
  doc.root.reject_unused();

  Section* workload = nullptr;
  for (auto& s : doc.sections) {
    if (s.name() == "fabric") {
      apply_fabric(s, sc);
      s.reject_unused();
    } else if (s.name() == "engine") {
      apply_engine(s, sc);
      s.reject_unused();
    } else if (s.name() == "workload") {
      workload = &s;
    } else {
      apply_host(s, sc);
      s.reject_unused();
    }
  }
  if (!workload) throw ConfigError(0, "missing [workload] section");
  apply_workload(*workload, sc);
  sc.fabric.rng_seed = sc.seed;
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(0, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace lcdnet::bench
