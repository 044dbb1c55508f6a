#include "lcdnet/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <memory>
#include <sstream>
#include <thread>

#include "lcdnet/errors.hpp"
#include "lcdnet/sim.hpp"

namespace lcdnet::bench {
namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* mode_name(SprayMode m) { return m == SprayMode::kNaive ? "naive" : "optimized"; }

void put_index(std::vector<std::uint8_t>& buf, std::uint64_t idx) {
  for (int i = 0; i < 8 && i < static_cast<int>(buf.size()); ++i) buf[i] = static_cast<std::uint8_t>(idx >> (8 * i));
}

std::uint64_t get_index(const std::vector<std::uint8_t>& buf) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8 && i < static_cast<int>(buf.size()); ++i) v |= std::uint64_t{buf[i]} << (8 * i);
  return v;
}

/// Message body for request `idx`: the index followed by a seeded byte pattern.
std::vector<std::uint8_t> body(std::size_t size, std::uint64_t seed, std::uint64_t idx) {
  std::vector<std::uint8_t> v(size);
  std::uint64_t x = mix(seed, idx);
  for (std::size_t i = 0; i < size; ++i) {
    if (i % 8 == 0) x = mix(x, i);
    v[i] = static_cast<std::uint8_t>(x >> (8 * (i % 8)));
  }
  put_index(v, idx);
  return v;
}

class Report {
 public:
  Report() {
    summary_ << "metric,value\n";
    engines_ << "world,host,engine,iterations,frames_rx,frames_tx,frames_malformed,drops_unknown_flow,"
                "drops_cross_engine,drops_no_listener,syn_wrong_engine,syns_sent,synacks_sent,"
                "synacks_discarded,syn_duplicates,handshake_retries,handshake_failures,flows_established,"
                "flows_reset,fragments_sent,fragments_retransmitted,fast_retransmits,rto_fired,"
                "messages_from_app,messages_to_app,channel_rx_high_water,channel_tx_high_water,"
                "tx_backlog_high_water\n";
    fabric_ << "world,host,queue,delivered,dropped_ring_full,transmitted\n";
  }

  std::ostringstream& samples() { return samples_; }
  void metric(const std::string& name, const std::string& value) { summary_ << name << ',' << value << '\n'; }
  void metric(const std::string& name, std::uint64_t value) { metric(name, std::to_string(value)); }
  void problem(std::string p) { problems_.push_back(std::move(p)); }

  void world(const std::string& label, Simulation& sim) {
    for (std::size_t h = 0; h < sim.host_count(); ++h) {
      Host& host = sim.host(h);
      for (std::size_t e = 0; e < host.sidecar().engine_count(); ++e) {
        const Engine& eng = host.sidecar().engine(e);
        const auto& s = eng.stats();
        const auto& hs = eng.handshake_stats();
        const auto t = eng.transport_totals();
        engines_ << label << ',' << host.name() << ',' << e << ',' << s.iterations << ',' << s.frames_rx << ','
                 << s.frames_tx << ',' << s.frames_malformed << ',' << s.drops_unknown_flow << ','
                 << s.drops_cross_engine << ',' << s.drops_no_listener << ',' << s.syn_wrong_engine << ','
                 << hs.syns_sent << ',' << hs.synacks_sent << ',' << hs.synacks_discarded << ','
                 << hs.syn_duplicates << ',' << hs.retries << ',' << hs.failures << ',' << s.flows_established
                 << ',' << s.flows_reset << ',' << t.fragments_first_sent << ',' << t.fragments_retransmitted << ','
                 << t.fast_retransmits << ',' << t.rto_fired << ',' << s.messages_from_app << ','
                 << s.messages_to_app << ',' << eng.channel_rx_high_water() << ',' << eng.channel_tx_high_water()
                 << ',' << s.tx_backlog_high_water << '\n';
        const auto& q = sim.fabric().queue_stats(host.id(), QueueId{static_cast<std::uint16_t>(e)});
        fabric_ << label << ',' << host.name() << ',' << e << ',' << q.delivered << ',' << q.dropped_ring_full << ','
                << q.transmitted << '\n';
      }
    }
    const auto audit = sim.audit();
    for (const auto& p : audit.problems) problem(label + ": " + p);
    const auto& f = audit.fabric;
    totals_.frames_sent += f.frames_sent;
    totals_.frames_delivered += f.frames_delivered;
    totals_.frames_lost += f.frames_lost;
    totals_.frames_dropped_ring_full += f.frames_dropped_ring_full;
    totals_.frames_dropped_unroutable += f.frames_dropped_unroutable;
    totals_.frames_reordered += f.frames_reordered;
    totals_.frames_in_flight += f.frames_in_flight;
    retransmits_ += audit.transport.fragments_retransmitted;
  }

  std::uint64_t retransmits() const { return retransmits_; }

  RunResult finish() {
    metric("fabric.frames_sent", totals_.frames_sent);
    metric("fabric.frames_delivered", totals_.frames_delivered);
    metric("fabric.frames_lost", totals_.frames_lost);
    metric("fabric.frames_dropped_ring_full", totals_.frames_dropped_ring_full);
    metric("fabric.frames_dropped_unroutable", totals_.frames_dropped_unroutable);
    metric("fabric.frames_reordered", totals_.frames_reordered);
    metric("fabric.frames_in_flight", totals_.frames_in_flight);
    metric("transport.fragments_retransmitted", retransmits_);
    metric("invariants_ok", problems_.empty() ? "true" : "false");
    return RunResult{samples_.str(), summary_.str(), engines_.str(), fabric_.str(), problems_};
  }

  void percentile_metrics(const std::string& prefix, std::vector<double> samples) {
    const auto p = percentiles(std::move(samples));
    metric(prefix + ".count", p.count);
    metric(prefix + ".p50_us", fmt(p.p50));
    metric(prefix + ".p99_us", fmt(p.p99));
    metric(prefix + ".p999_us", fmt(p.p999));
    metric(prefix + ".mean_us", fmt(p.mean));
    metric(prefix + ".max_us", fmt(p.max));
  }

 private:
  std::ostringstream samples_;
  std::ostringstream summary_;
  std::ostringstream engines_;
  std::ostringstream fabric_;
  std::vector<std::string> problems_;
  FabricStats totals_;
  std::uint64_t retransmits_ = 0;
};

std::unique_ptr<Simulation> make_world(const Scenario& sc, std::uint64_t seed, const std::vector<HostSpec>& hosts,
                                       const EngineConfig& engine) {
  FabricConfig fc = sc.fabric;
  fc.rng_seed = seed;
  auto sim = std::make_unique<Simulation>(fc);
  for (const auto& h : hosts) sim->add_host({h.name, h.ip, h.engines, engine});
  return sim;
}

constexpr VirtualDuration kRunLimit = std::chrono::seconds(3600);

// ---------------------------------------------------------------------------

void run_echo(const Scenario& sc, Report& rep) {
  const auto& w = sc.echo;
  auto sim = make_world(sc, sc.seed, sc.hosts, sc.engine);
  Host& client = sim->host(w.client);
  Host& server = sim->host(w.server);

  auto srv = server.shim().attach(EnginePolicy::round_robin());
  srv.listen(w.port);
  auto cli = client.shim().attach(EnginePolicy::round_robin());
  const FlowHandle flow = cli.connect(server.ip(), w.port);

  std::vector<VirtualTime> sent_at(w.count);
  std::vector<double> rtts;
  std::size_t sent = 0;
  std::size_t done = 0;
  std::size_t corrupt = 0;
  std::deque<Message> replies;

  sim->add_poller([&] {
    bool did = false;
    while (auto m = srv.recv(RecvMode::kNonBlocking)) {
      replies.push_back(std::move(*m));
      did = true;
    }
    while (!replies.empty() && srv.try_send(replies.front().flow, replies.front().payload)) {
      replies.pop_front();
      did = true;
    }
    return did;
  });
  sim->add_poller([&] {
    bool did = false;
    while (auto m = cli.recv(RecvMode::kNonBlocking)) {
      const auto idx = get_index(m->payload);
      if (idx >= w.count || m->payload != body(w.msg_size, sc.seed, idx)) {
        ++corrupt;
      } else {
        const double rtt = to_micros(sim->now() - sent_at[idx]);
        rtts.push_back(rtt);
        rep.samples() << idx << ',' << w.msg_size << ',' << fmt(to_micros(sent_at[idx])) << ','
                      << fmt(to_micros(sim->now())) << ',' << fmt(rtt) << '\n';
      }
      ++done;
      did = true;
    }
    while (sent < w.count && sent - done < w.inflight) {
      if (!cli.try_send(flow, body(w.msg_size, sc.seed, sent))) break;
      sent_at[sent++] = sim->now();
      did = true;
    }
    return did;
  });

  rep.samples() << "seq,size_bytes,sent_us,received_us,rtt_us\n";
  const VirtualTime start = sim->now();
  sim->run_until([&] { return done == w.count; }, kRunLimit);
  const double elapsed_s = to_micros(sim->now() - start) / 1e6;
  sim->clear_pollers();

  rep.metric("echo.requested", w.count);
  rep.metric("echo.completed", done);
  rep.metric("echo.corrupt", corrupt);
  rep.percentile_metrics("echo.rtt", rtts);
  rep.metric("echo.messages_per_second", fmt(elapsed_s > 0 ? static_cast<double>(done) / elapsed_s : 0.0));
  if (done != w.count) rep.problem("echo: " + std::to_string(done) + " of " + std::to_string(w.count) + " completed");
  if (corrupt) rep.problem("echo: " + std::to_string(corrupt) + " corrupted replies");
  rep.world("echo", *sim);
}

// ---------------------------------------------------------------------------

void run_conn_setup(const Scenario& sc, Report& rep) {
  const auto& w = sc.conn_setup;
  rep.samples() << "client_engines,server_engines,mode,world,trial,established,attempts,latency_us\n";
  for (std::size_t pi = 0; pi < w.pairs.size(); ++pi) {
    const EnginePair pair = w.pairs[pi];
    for (const SprayMode mode : w.modes) {
      EngineConfig ec = sc.engine;
      ec.handshake.mode = mode;
      std::vector<double> latencies;
      std::size_t first_batch = 0;
      std::size_t failures = 0;
      const std::size_t worlds = (w.trials + w.world_size - 1) / w.world_size;
      for (std::size_t wi = 0; wi < worlds; ++wi) {
        const std::uint64_t seed = mix(mix(sc.seed, pi), (static_cast<std::uint64_t>(mode) << 32) | wi);
        const std::vector<HostSpec> hosts{{"client", Ipv4Addr::from_octets(10, 0, 0, 1), pair.client},
                                          {"server", Ipv4Addr::from_octets(10, 0, 0, 2), pair.server}};
        auto sim = make_world(sc, seed, hosts, ec);
        Host& client = sim->host("client");
        Host& server = sim->host("server");
        std::vector<AppChannel> listeners;
        for (std::size_t e = 0; e < pair.server; ++e) {
          listeners.push_back(server.shim().attach(EnginePolicy::pin(QueueId{static_cast<std::uint16_t>(e)})));
          listeners.back().listen(static_cast<std::uint16_t>(7000 + e));
        }
        std::vector<AppChannel> clients;
        for (std::size_t e = 0; e < pair.client; ++e) {
          clients.push_back(client.shim().attach(EnginePolicy::pin(QueueId{static_cast<std::uint16_t>(e)})));
        }
        const std::size_t begin = wi * w.world_size;
        const std::size_t end = std::min(w.trials, begin + w.world_size);
        for (std::size_t t = begin; t < end; ++t) {
          AppChannel& ch = clients[t % pair.client];
          const auto port = static_cast<std::uint16_t>(7000 + (t / pair.client) % pair.server);
          const VirtualTime t0 = sim->now();
          const auto ticket = ch.connect_async(server.ip(), port);
          std::optional<ConnectOutcome> out;
          sim->run_until([&] { return (out = ch.poll_connect(ticket)).has_value(); }, kRunLimit);
          if (!out) {
            rep.problem("conn_setup: connect never completed");
            ++failures;
            continue;
          }
          const double lat = to_micros(out->at - t0);
          if (out->ok) {
            latencies.push_back(lat);
            if (out->attempts == 1) ++first_batch;
          } else {
            ++failures;
          }
          rep.samples() << pair.client << ',' << pair.server << ',' << mode_name(mode) << ',' << wi << ',' << t << ','
                        << (out->ok ? 1 : 0) << ',' << out->attempts << ',' << fmt(lat) << '\n';
        }
        rep.world(std::to_string(pair.client) + "x" + std::to_string(pair.server) + "/" + mode_name(mode) + "/w" +
                      std::to_string(wi),
                  *sim);
      }
      const std::string prefix =
          "conn." + std::to_string(pair.client) + "x" + std::to_string(pair.server) + "." + mode_name(mode);
      rep.metric(prefix + ".trials", w.trials);
      rep.metric(prefix + ".first_batch", first_batch);
      rep.metric(prefix + ".first_batch_rate",
                 fmt6(w.trials ? static_cast<double>(first_batch) / static_cast<double>(w.trials) : 0.0));
      rep.metric(prefix + ".failures", failures);
      rep.percentile_metrics(prefix + ".latency", latencies);
    }
  }
}

// ---------------------------------------------------------------------------

struct IsolationOutcome {
  std::vector<double> probe_latencies;
  std::size_t bulk_completed = 0;
};

IsolationOutcome isolation_variant(const Scenario& sc, const std::string& label, bool pinned, bool bulk_on,
                                   Report& rep) {
  const auto& w = sc.isolation;
  auto sim = make_world(sc, sc.seed, sc.hosts, sc.engine);
  Host& client = sim->host(w.client);
  Host& server = sim->host(w.server);
  const std::size_t nbulk = bulk_on ? w.bulk_flows : 0;

  auto policy = [pinned](std::uint16_t engine) {
    return pinned ? EnginePolicy::pin(QueueId{engine}) : EnginePolicy::round_robin();
  };
  // Attachment order is the same on both hosts: bulk apps first, probe last.
  std::vector<AppChannel> bulk_srv;
  std::vector<AppChannel> bulk_cli;
  std::vector<FlowHandle> bulk_flows;
  for (std::size_t i = 0; i < w.bulk_flows; ++i) {
    bulk_srv.push_back(server.shim().attach(policy(0)));
    if (i < nbulk) bulk_srv.back().listen(static_cast<std::uint16_t>(6000 + i));
  }
  auto probe_srv = server.shim().attach(policy(1));
  probe_srv.listen(6100);
  for (std::size_t i = 0; i < w.bulk_flows; ++i) {
    bulk_cli.push_back(client.shim().attach(policy(0)));
    if (i < nbulk) bulk_flows.push_back(bulk_cli.back().connect(server.ip(), static_cast<std::uint16_t>(6000 + i)));
  }
  auto probe_cli = client.shim().attach(policy(1));
  const FlowHandle probe_flow = probe_cli.connect(server.ip(), 6100);

  IsolationOutcome out;
  const auto bulk_payload = body(w.bulk_size, sc.seed, 0);
  const std::vector<std::uint8_t> bulk_ack(8, 0xAC);
  std::vector<std::size_t> outstanding(nbulk, 0);
  bool stop_bulk = false;

  sim->add_poller([&] {
    bool did = false;
    for (std::size_t i = 0; i < nbulk; ++i) {
      while (auto m = bulk_srv[i].recv(RecvMode::kNonBlocking)) {
        if (!bulk_srv[i].try_send(m->flow, bulk_ack)) rep.problem(label + ": bulk ack dropped");
        did = true;
      }
      while (auto m = bulk_cli[i].recv(RecvMode::kNonBlocking)) {
        --outstanding[i];
        ++out.bulk_completed;
        did = true;
      }
      while (!stop_bulk && outstanding[i] < w.bulk_inflight && bulk_cli[i].try_send(bulk_flows[i], bulk_payload)) {
        ++outstanding[i];
        did = true;
      }
    }
    while (auto m = probe_srv.recv(RecvMode::kNonBlocking)) {
      if (!probe_srv.try_send(m->flow, m->payload)) rep.problem(label + ": probe echo dropped");
      did = true;
    }
    return did;
  });

  // Warm up the bulk flows, then fire probes open-loop on a fixed schedule.
  sim->run_for(std::chrono::milliseconds(1));
  const VirtualTime start = sim->now();
  std::vector<VirtualTime> probe_sent(w.probe_count);
  for (std::size_t k = 0; k < w.probe_count; ++k) {
    const VirtualTime at = start + w.probe_interval * static_cast<std::int64_t>(k);
    probe_sent[k] = at;
    sim->schedule(at, [&, k] {
      if (!probe_cli.try_send(probe_flow, body(w.probe_size, sc.seed, k))) rep.problem(label + ": probe not sent");
    });
  }
  std::size_t received = 0;
  sim->add_poller([&] {
    bool did = false;
    while (auto m = probe_cli.recv(RecvMode::kNonBlocking)) {
      const auto k = get_index(m->payload);
      const double lat = to_micros(sim->now() - probe_sent.at(k));
      out.probe_latencies.push_back(lat);
      rep.samples() << label << ',' << k << ',' << fmt(lat) << '\n';
      ++received;
      did = true;
    }
    return did;
  });
  sim->run_until([&] { return received == w.probe_count; }, kRunLimit);
  stop_bulk = true;
  sim->clear_pollers();
  if (received != w.probe_count) rep.problem(label + ": probes lost");
  rep.world(label, *sim);
  return out;
}

void run_isolation(const Scenario& sc, Report& rep) {
  rep.samples() << "variant,probe,latency_us\n";
  const auto baseline = isolation_variant(sc, "baseline", true, false, rep);
  const auto pinned = isolation_variant(sc, "pinned", true, true, rep);
  const auto unpinned = isolation_variant(sc, "unpinned", false, true, rep);
  const auto pb = percentiles(baseline.probe_latencies);
  const auto pp = percentiles(pinned.probe_latencies);
  const auto pu = percentiles(unpinned.probe_latencies);
  rep.percentile_metrics("iso.baseline.probe", baseline.probe_latencies);
  rep.percentile_metrics("iso.pinned.probe", pinned.probe_latencies);
  rep.percentile_metrics("iso.unpinned.probe", unpinned.probe_latencies);
  rep.metric("iso.pinned.bulk_messages", pinned.bulk_completed);
  rep.metric("iso.unpinned.bulk_messages", unpinned.bulk_completed);
  rep.metric("iso.pinned_over_baseline_p99", fmt6(pb.p99 > 0 ? pp.p99 / pb.p99 : 0.0));
  rep.metric("iso.unpinned_over_pinned_p99", fmt6(pp.p99 > 0 ? pu.p99 / pp.p99 : 0.0));
}

// ---------------------------------------------------------------------------

void run_blocking(const Scenario& sc, Report& rep) {
  const auto& w = sc.blocking;
  rep.samples() << "mode,receiver,handled,sleeps,empty_wakeups,spin_polls\n";
  for (const BlockingMode mode : w.modes) {
    const std::string label = mode == BlockingMode::kBlocking ? "blocking" : "polling";
    auto sim = make_world(sc, sc.seed, sc.hosts, sc.engine);
    Host& client = sim->host(w.client);
    Host& server = sim->host(w.server);

    // Every receiver shares engine 0 on the server.
    std::vector<AppChannel> receivers;
    for (std::size_t i = 0; i < w.threads; ++i) {
      receivers.push_back(server.shim().attach(EnginePolicy::pin(QueueId{0})));
      receivers.back().listen(static_cast<std::uint16_t>(5000 + i));
    }
    auto cli = client.shim().attach(EnginePolicy::pin(QueueId{0}));
    std::vector<FlowHandle> flows;
    for (std::size_t i = 0; i < w.threads; ++i) {
      flows.push_back(cli.connect(server.ip(), static_cast<std::uint16_t>(5000 + i)));
    }

    ThreadedRuntime runtime(*sim);
    runtime.start();
    std::vector<std::size_t> handled(w.threads, 0);
    std::vector<std::size_t> timeouts(w.threads, 0);
    std::vector<std::thread> threads;
    const std::vector<std::uint8_t> stop{'s', 't', 'o', 'p'};
    for (std::size_t i = 0; i < w.threads; ++i) {
      threads.emplace_back([&, i] {
        AppChannel& ch = receivers[i];
        for (;;) {
          std::optional<Message> m;
          if (mode == BlockingMode::kBlocking) {
            m = ch.recv(RecvMode::kBlocking, std::chrono::seconds(10));
            if (!m) {
              ++timeouts[i];
              continue;
            }
          } else {
            m = ch.recv(RecvMode::kNonBlocking);
            if (!m) {
              std::this_thread::yield();
              continue;
            }
          }
          if (m->payload == stop) break;
          ++handled[i];
          ch.send(m->flow, m->payload);
        }
      });
    }

    const auto wall0 = std::chrono::steady_clock::now();
    std::size_t mismatched = 0;
    std::size_t lost = 0;
    for (std::size_t r = 0; r < w.requests; ++r) {
      const auto req = body(32, sc.seed, r);
      cli.send(flows[r % w.threads], req);
      auto reply = cli.recv(RecvMode::kBlocking, std::chrono::seconds(10));
      if (!reply) {
        ++lost;
      } else if (reply->payload != req) {
        ++mismatched;
      }
    }
    const double wall_us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - wall0).count();
    for (std::size_t i = 0; i < w.threads; ++i) cli.send(flows[i], stop);
    for (auto& t : threads) t.join();
    runtime.stop();

    std::uint64_t spins = 0;
    std::uint64_t sleeps = 0;
    std::uint64_t empty_wakeups = 0;
    for (std::size_t i = 0; i < w.threads; ++i) {
      const auto& st = receivers[i].recv_stats();
      rep.samples() << label << ',' << i << ',' << handled[i] << ',' << st.sleeps << ',' << st.empty_wakeups << ','
                    << st.empty_polls << '\n';
      spins += st.empty_polls;
      sleeps += st.sleeps;
      empty_wakeups += st.empty_wakeups;
    }
    rep.metric("blocking." + label + ".requests", w.requests);
    rep.metric("blocking." + label + ".lost", lost);
    rep.metric("blocking." + label + ".mismatched", mismatched);
    rep.metric("blocking." + label + ".receiver_spin_polls", spins);
    rep.metric("blocking." + label + ".receiver_sleeps", sleeps);
    rep.metric("blocking." + label + ".receiver_empty_wakeups", empty_wakeups);
    rep.metric("blocking." + label + ".wall_us", fmt(wall_us));
    if (lost || mismatched) rep.problem("blocking/" + label + ": replies lost or corrupted");
    rep.world(label, *sim);
  }
}

}  // namespace

Percentiles percentiles(std::vector<double> samples) {
  Percentiles p;
  p.count = samples.size();
  if (samples.empty()) return p;
  std::sort(samples.begin(), samples.end());
  auto rank = [&samples](double q) {
    const auto n = static_cast<double>(samples.size());
    auto idx = static_cast<std::size_t>(std::ceil(q * n));
    idx = std::clamp<std::size_t>(idx, 1, samples.size());
    return samples[idx - 1];
  };
  p.p50 = rank(0.50);
  p.p99 = rank(0.99);
  p.p999 = rank(0.999);
  double sum = 0;
  for (double s : samples) sum += s;
  p.mean = sum / static_cast<double>(samples.size());
  p.max = samples.back();
  return p;
}

RunResult run_scenario(const Scenario& scenario) {
  Report rep;
  switch (scenario.kind) {
    case WorkloadKind::kEcho:
      run_echo(scenario, rep);
      break;
    case WorkloadKind::kConnSetup:
      run_conn_setup(scenario, rep);
      break;
    case WorkloadKind::kIsolation:
      run_isolation(scenario, rep);
      break;
    case WorkloadKind::kBlocking:
      run_blocking(scenario, rep);
      break;
  }
  return rep.finish();
}

std::string formula_table(const std::vector<std::uint32_t>& engines, double p) {
  std::ostringstream out;
  out << "n,p,naive,optimized_per_side,optimized_exact_per_side,optimized_total_floor2x\n";
  for (const auto n : engines) {
    const auto opt = required_batch_optimized(n, p);
    out << n << ',' << fmt6(p) << ',' << required_batch_naive(n, p) << ',' << opt.per_side << ','
        << fmt6(opt.exact_per_side) << ',' << opt.total_floor_doubled << '\n';
  }
  return out.str();
}

}  // namespace lcdnet::bench
