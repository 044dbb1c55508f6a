#include "doctest.h"
#include "lcdnet/errors.hpp"
#include "lcdnet/wire.hpp"
#include "support.hpp"

using namespace lcdnet;
using namespace lcdnet::testing;
using namespace std::chrono_literals;

TEST_CASE("channel assignment: round-robin and pinning") {
  TwoHosts w(seeded(1), 4, 1);
  auto& car = w.client->sidecar();
  std::vector<std::size_t> got;
  for (int i = 0; i < 6; ++i) got.push_back(car.assign_channel(EnginePolicy::round_robin()).engine.index());
  CHECK(got == std::vector<std::size_t>{0, 1, 2, 3, 0, 1});
  CHECK(car.assign_channel(EnginePolicy::pin(QueueId{2})).engine == QueueId{2});
  CHECK_THROWS_AS(car.assign_channel(EnginePolicy::pin(QueueId{9})), Error);
  try {
    car.assign_channel(EnginePolicy::pin(QueueId{4}));
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kArgument);
  }
}

TEST_CASE("pinned channels stay where they were put") {
  TwoHosts w(seeded(1), 4, 1);
  auto& car = w.client->sidecar();
  for (int i = 0; i < 3; ++i) car.assign_channel(EnginePolicy::pin(QueueId{0}));
  car.assign_channel(EnginePolicy::pin(QueueId{1}));
  CHECK(car.engine(0).channel_count() == 3);
  CHECK(car.engine(1).channel_count() == 1);
  CHECK(car.engine(2).channel_count() == 0);
  CHECK(car.engine(3).channel_count() == 0);
}

TEST_CASE("an idle engine iteration processes nothing") {
  TwoHosts w(seeded(2), 2, 1);
  auto& e = w.client->sidecar().engine(1);
  CHECK(e.run_iteration() == 0);
  CHECK(e.run_iteration() == 0);
  CHECK(e.stats().iterations == 2);
  CHECK_FALSE(e.has_pending_work());
}

TEST_CASE("a frame for a flow owned by another engine is dropped and counted") {
  TwoHosts w(seeded(3), 1, 4);
  auto srv = w.server->shim().attach(EnginePolicy::pin(QueueId{2}));
  srv.listen(7000);
  auto cli = w.client->shim().attach(EnginePolicy::round_robin());
  const auto flow = cli.connect(kServerIp, 7000);
  cli.send(flow, std::vector<std::uint8_t>{1, 2, 3});
  REQUIRE(srv.recv(RecvMode::kBlocking, 10ms));
  w.sim.run_for(1ms);

  const auto server_flows = w.server->sidecar().engine(2).audit_flows();
  REQUIRE(server_flows.size() == 1);
  const auto& f = server_flows[0];
  MachnetHeader h;
  h.type = PacketType::kData;
  h.src_port = flow.local_port;
  h.dst_port = flow.remote_port;
  h.seq = 2;
  h.msg_id = 2;
  h.msg_len = 1;
  h.flags = header_flags::kLastFragment;
  const std::uint8_t one[] = {9};
  const Frame stray = build_frame(kClientIp, kServerIp, {f.rx.src, f.rx.dst}, h, one);
  const auto before = w.server->sidecar().engine(0).stats().drops_cross_engine;
  REQUIRE(w.sim.fabric().inject(w.server->id(), QueueId{0}, stray));
  w.sim.run_for(1ms);
  CHECK(w.server->sidecar().engine(0).stats().drops_cross_engine == before + 1);
  CHECK(w.server->sidecar().engine(0).flow_count() == 0);
  CHECK_FALSE(srv.recv(RecvMode::kNonBlocking));
  CHECK(w.server->sidecar().engine(2).find_flow(f.key)->rx_next_expected() == 2);

  // The real flow still works afterwards.
  cli.send(flow, std::vector<std::uint8_t>{4});
  auto m = srv.recv(RecvMode::kBlocking, 10ms);
  REQUIRE(m);
  CHECK(m->payload == std::vector<std::uint8_t>{4});
  const auto a = w.sim.audit();
  CHECK(a.foreign_channel_touches == 0);
  CHECK(a.foreign_flow_touches == 0);
}

TEST_CASE("a flooding channel does not starve a quiet one on the same engine") {
  TwoHosts w(seeded(4), 1, 1);
  auto srv = w.server->shim().attach(EnginePolicy::round_robin());
  srv.listen(7000);
  auto loud = w.client->shim().attach(EnginePolicy::round_robin());
  auto quiet = w.client->shim().attach(EnginePolicy::round_robin());
  const auto lf = loud.connect(kServerIp, 7000);
  const auto qf = quiet.connect(kServerIp, 7000);
  for (int i = 0; i < 1000; ++i) loud.try_send(lf, std::vector<std::uint8_t>(512, 1));
  quiet.send(qf, std::vector<std::uint8_t>{2});
  std::size_t before_quiet = 0;
  bool quiet_seen = false;
  w.sim.run_until(
      [&] {
        while (auto m = srv.recv(RecvMode::kNonBlocking)) {
          if (m->flow.remote_port == qf.local_port) {
            quiet_seen = true;
          } else if (!quiet_seen) {
            ++before_quiet;
          }
        }
        return quiet_seen;
      },
      1s);
  CHECK(quiet_seen);
  // One burst per channel per iteration bounds how far ahead the loud one gets.
  CHECK(before_quiet <= 2 * w.client->config().engine.burst);
}

TEST_CASE("engine iteration cost follows the cost model") {
  TwoHosts w(seeded(5), 1, 1);
  auto srv = w.server->shim().attach(EnginePolicy::round_robin());
  srv.listen(7000);
  auto cli = w.client->shim().attach(EnginePolicy::round_robin());
  const auto flow = cli.connect(kServerIp, 7000);
  w.sim.run_for(1ms);
  cli.try_send(flow, std::vector<std::uint8_t>{1});
  auto& e = w.client->sidecar().engine(0);
  e.run_iteration();
  // One app message, one DATA frame out.
  CHECK(e.last_iteration_cost() == 500ns);
}
