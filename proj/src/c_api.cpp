#include "lcdnet/lcdnet.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "lcdnet/bench.hpp"
#include "lcdnet/errors.hpp"
#include "lcdnet/sim.hpp"

struct lcdnet_sim {
  std::unique_ptr<lcdnet::Simulation> sim;
};

struct lcdnet_stack {
  lcdnet::Simulation* sim = nullptr;
  lcdnet::Host* host = nullptr;
  lcdnet::Shim shim;
};

struct lcdnet_channel {
  lcdnet::Simulation* sim;
  lcdnet::AppChannel app;
  std::optional<lcdnet::Message> stashed;  // held back after a too-small recv buffer
};

namespace {

thread_local std::string g_last_error;

lcdnet_status from_errc(lcdnet::Errc code) {
  using lcdnet::Errc;
  switch (code) {
    case Errc::kArgument: return LCDNET_ERR_ARGUMENT;
    case Errc::kState: return LCDNET_ERR_STATE;
    case Errc::kBind: return LCDNET_ERR_BIND;
    case Errc::kConnect: return LCDNET_ERR_CONNECT;
    case Errc::kFlow: return LCDNET_ERR_FLOW;
    case Errc::kSize: return LCDNET_ERR_SIZE;
    case Errc::kResource: return LCDNET_ERR_RESOURCE;
    case Errc::kTimeout: return LCDNET_ERR_TIMEOUT;
    case Errc::kConfig: return LCDNET_ERR_CONFIG;
    case Errc::kInvariant: return LCDNET_ERR_INVARIANT;
  }
  return LCDNET_ERR_INTERNAL;
}

lcdnet_status fail(lcdnet_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <typename F>
lcdnet_status guarded(F&& f) {
  g_last_error.clear();
  try {
    return f();
  } catch (const lcdnet::Error& e) {
    return fail(from_errc(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(LCDNET_ERR_RESOURCE, "out of memory");
  } catch (const std::exception& e) {
    return fail(LCDNET_ERR_INTERNAL, e.what());
  }
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  return static_cast<bool>(out);
}

std::string sibling(const std::string& out, const char* suffix) {
  std::string base = out;
  if (base.size() > 4 && base.compare(base.size() - 4, 4, ".csv") == 0) base.resize(base.size() - 4);
  return base + suffix;
}

}  // namespace

extern "C" {

const char* lcdnet_status_str(lcdnet_status status) {
  switch (status) {
    case LCDNET_OK: return "ok";
    case LCDNET_ERR_ARGUMENT: return "argument";
    case LCDNET_ERR_STATE: return "state";
    case LCDNET_ERR_BIND: return "bind";
    case LCDNET_ERR_CONNECT: return "connect";
    case LCDNET_ERR_FLOW: return "flow";
    case LCDNET_ERR_SIZE: return "size";
    case LCDNET_ERR_RESOURCE: return "resource";
    case LCDNET_ERR_TIMEOUT: return "timeout";
    case LCDNET_ERR_CONFIG: return "config";
    case LCDNET_ERR_INVARIANT: return "invariant";
    case LCDNET_ERR_EMPTY: return "empty";
    case LCDNET_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* lcdnet_last_error(void) { return g_last_error.c_str(); }

lcdnet_status lcdnet_sim_create(const lcdnet_fabric_config* config, lcdnet_sim** out) {
  return guarded([&] {
    if (!out) return fail(LCDNET_ERR_ARGUMENT, "out is null");
    lcdnet::FabricConfig fc;
    if (config) {
      fc.loss_probability = config->loss;
      fc.reorder_probability = config->reorder;
      if (config->base_delay_us) fc.base_delay = std::chrono::microseconds(config->base_delay_us);
      fc.delay_jitter = std::chrono::microseconds(config->jitter_us);
      fc.rng_seed = config->seed;
    }
    auto handle = std::make_unique<lcdnet_sim>();
    handle->sim = std::make_unique<lcdnet::Simulation>(fc);
    *out = handle.release();
    return LCDNET_OK;
  });
}

void lcdnet_sim_destroy(lcdnet_sim* sim) { delete sim; }

lcdnet_status lcdnet_sim_add_host(lcdnet_sim* sim, const char* name, const char* ip, uint32_t engines) {
  return guarded([&] {
    if (!sim || !name || !ip) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    if (engines == 0 || engines > 64) return fail(LCDNET_ERR_ARGUMENT, "engines must be in [1, 64]");
    sim->sim->add_host({name, lcdnet::Ipv4Addr::parse(ip), engines, {}});
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_sim_run_for(lcdnet_sim* sim, uint64_t micros) {
  return guarded([&] {
    if (!sim) return fail(LCDNET_ERR_ARGUMENT, "sim is null");
    sim->sim->run_for(std::chrono::microseconds(micros));
    return LCDNET_OK;
  });
}

double lcdnet_sim_now_us(const lcdnet_sim* sim) { return sim ? lcdnet::to_micros(sim->sim->now()) : 0.0; }

lcdnet_status lcdnet_sim_audit(const lcdnet_sim* sim) {
  return guarded([&] {
    if (!sim) return fail(LCDNET_ERR_ARGUMENT, "sim is null");
    const auto audit = sim->sim->audit();
    if (audit.ok()) return LCDNET_OK;
    std::string msg;
    for (const auto& p : audit.problems) msg += p + "\n";
    return fail(LCDNET_ERR_INVARIANT, msg);
  });
}

lcdnet_status lcdnet_stack_create(lcdnet_sim* sim, const char* host, lcdnet_stack** out) {
  return guarded([&] {
    if (!sim || !host || !out) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    auto handle = std::make_unique<lcdnet_stack>();
    handle->sim = sim->sim.get();
    handle->host = &sim->sim->host(host);
    *out = handle.release();
    return LCDNET_OK;
  });
}

void lcdnet_stack_release(lcdnet_stack* stack) { delete stack; }

lcdnet_status lcdnet_init(lcdnet_stack* stack) {
  return guarded([&] {
    if (!stack) return fail(LCDNET_ERR_ARGUMENT, "stack is null");
    lcdnet::Simulation* sim = stack->sim;
    stack->shim.init(stack->host->sidecar(), [sim](const auto& ready, auto until) { return sim->pump(ready, until); });
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_attach(lcdnet_stack* stack, int32_t engine, lcdnet_channel** out) {
  return guarded([&] {
    if (!stack || !out) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    if (engine < LCDNET_POLICY_ROUND_ROBIN || engine > 0xffff) return fail(LCDNET_ERR_ARGUMENT, "bad engine index");
    const auto policy = engine == LCDNET_POLICY_ROUND_ROBIN
                            ? lcdnet::EnginePolicy::round_robin()
                            : lcdnet::EnginePolicy::pin(lcdnet::QueueId{static_cast<std::uint16_t>(engine)});
    *out = new lcdnet_channel{stack->sim, stack->shim.attach(policy), std::nullopt};
    return LCDNET_OK;
  });
}

void lcdnet_channel_release(lcdnet_channel* channel) { delete channel; }

uint32_t lcdnet_channel_engine(const lcdnet_channel* channel) {
  return channel ? channel->app.engine().index() : 0;
}

lcdnet_status lcdnet_listen(lcdnet_channel* channel, uint16_t port) {
  return guarded([&] {
    if (!channel) return fail(LCDNET_ERR_ARGUMENT, "channel is null");
    channel->app.listen(port);
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_bind(lcdnet_channel* channel, uint16_t port) { return lcdnet_listen(channel, port); }

lcdnet_status lcdnet_connect(lcdnet_channel* channel, const char* remote_ip, uint16_t remote_port, lcdnet_flow* flow,
                             uint32_t* attempts) {
  return guarded([&] {
    if (!channel || !remote_ip || !flow) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    const auto ticket = channel->app.connect_async(lcdnet::Ipv4Addr::parse(remote_ip), remote_port);
    std::optional<lcdnet::ConnectOutcome> outcome;
    auto settled = [&] {
      if (!outcome) outcome = channel->app.poll_connect(ticket);
      return outcome.has_value();
    };
    while (!settled()) {
      if (!channel->sim->pump(settled, std::nullopt) && !settled()) {
        return fail(LCDNET_ERR_RESOURCE, "simulation idle before connect completed");
      }
    }
    if (attempts) *attempts = outcome->attempts;
    if (!outcome->ok) {
      return fail(from_errc(outcome->error),
                  "connect failed after " + std::to_string(outcome->attempts) + " attempts");
    }
    *flow = outcome->flow.pack();
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_send(lcdnet_channel* channel, lcdnet_flow flow, const void* data, size_t len) {
  return guarded([&] {
    if (!channel || (!data && len)) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    const auto* p = static_cast<const std::uint8_t*>(data);
    channel->app.send(lcdnet::FlowHandle::unpack(flow), std::span<const std::uint8_t>(p, len));
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_recv(lcdnet_channel* channel, int blocking, uint64_t timeout_us, void* buf, size_t* len,
                          lcdnet_flow* flow) {
  return guarded([&] {
    if (!channel || !len) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    if (!channel->stashed) {
      std::optional<lcdnet::VirtualDuration> timeout;
      if (blocking && timeout_us) timeout = std::chrono::microseconds(timeout_us);
      channel->stashed =
          channel->app.recv(blocking ? lcdnet::RecvMode::kBlocking : lcdnet::RecvMode::kNonBlocking, timeout);
      if (!channel->stashed) {
        return blocking ? fail(LCDNET_ERR_TIMEOUT, "recv timed out") : LCDNET_ERR_EMPTY;
      }
    }
    const auto& m = *channel->stashed;
    if (!buf || *len < m.payload.size()) {
      *len = m.payload.size();
      return fail(LCDNET_ERR_SIZE, "buffer too small");
    }
    std::memcpy(buf, m.payload.data(), m.payload.size());
    *len = m.payload.size();
    if (flow) *flow = m.flow.pack();
    channel->stashed.reset();
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_close(lcdnet_channel* channel, lcdnet_flow flow) {
  return guarded([&] {
    if (!channel) return fail(LCDNET_ERR_ARGUMENT, "channel is null");
    channel->app.close(lcdnet::FlowHandle::unpack(flow));
    return LCDNET_OK;
  });
}

lcdnet_status lcdnet_formula_table(const uint32_t* engines, size_t count, double p, char** csv) {
  return guarded([&] {
    if (!csv || (!engines && count)) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    if (!(p > 0.0 && p < 1.0)) return fail(LCDNET_ERR_ARGUMENT, "p must be in (0, 1)");
    for (size_t i = 0; i < count; ++i) {
      if (engines[i] == 0) return fail(LCDNET_ERR_ARGUMENT, "engine count must be positive");
    }
    const auto text = lcdnet::bench::formula_table(std::vector<std::uint32_t>(engines, engines + count), p);
    auto* mem = static_cast<char*>(std::malloc(text.size() + 1));
    if (!mem) return fail(LCDNET_ERR_RESOURCE, "out of memory");
    std::memcpy(mem, text.c_str(), text.size() + 1);
    *csv = mem;
    return LCDNET_OK;
  });
}

void lcdnet_free(void* p) { std::free(p); }

lcdnet_status lcdnet_run_scenario(const char* config_path, const uint64_t* seed, const char* out_path) {
  return guarded([&] {
    if (!config_path || !out_path) return fail(LCDNET_ERR_ARGUMENT, "null argument");
    auto sc = lcdnet::bench::load_scenario(config_path);
    if (seed) {
      sc.seed = *seed;
      sc.fabric.rng_seed = *seed;
    }
    const auto result = lcdnet::bench::run_scenario(sc);
    const std::string out = out_path;
    const bool written = write_file(out, result.samples_csv) &&
                         write_file(sibling(out, ".summary.csv"), result.summary_csv) &&
                         write_file(sibling(out, ".engines.csv"), result.engines_csv) &&
                         write_file(sibling(out, ".fabric.csv"), result.fabric_csv);
    if (!written) return fail(LCDNET_ERR_RESOURCE, "cannot write " + out);
    if (!result.ok()) {
      std::string msg;
      for (const auto& p : result.problems) msg += p + "\n";
      return fail(LCDNET_ERR_INVARIANT, msg);
    }
    return LCDNET_OK;
  });
}

}  // extern "C"
