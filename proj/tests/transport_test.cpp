#include <array>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "doctest.h"
#include "lcdnet/errors.hpp"
#include "lcdnet/rssminus.hpp"
#include "lcdnet/transport.hpp"
#include "support.hpp"

using namespace lcdnet;
using namespace lcdnet::testing;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> load_hex(const std::string& name) {
  std::ifstream in(std::string(LCDNET_FIXTURE_DIR) + "/" + name);
  REQUIRE(in);
  std::vector<std::uint8_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream words(line);
    std::string w;
    while (words >> w) out.push_back(static_cast<std::uint8_t>(std::stoul(w, nullptr, 16)));
  }
  return out;
}

std::vector<std::uint8_t> bytes_of(const Frame& f) { return {f.bytes().begin(), f.bytes().end()}; }

Packet packet(const Frame& f) {
  auto p = parse_packet(f);
  REQUIRE(p);
  return *p;
}

// Client and server halves of one flow, wired directly without a fabric.
struct Link {
  TransportConfig cfg;
  FlowState tx;
  FlowState rx;
  explicit Link(TransportConfig c = {})
      : cfg(c),
        tx(kClientIp, {kServerIp, 7000, 80}, {40000, 50000}, {50001, 40001}, QueueId{0}, c, false),
        rx(kServerIp, {kClientIp, 80, 7000}, {50001, 40001}, {40000, 50000}, QueueId{0}, c, false) {}
};

std::vector<std::uint8_t> ramp(std::size_t n) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::uint8_t>(i * 7 + (i >> 11));
  return v;
}

}  // namespace

TEST_CASE("wire: golden DATA frame") {
  MachnetHeader h;
  h.type = PacketType::kData;
  h.src_port = 7000;
  h.dst_port = 80;
  h.seq = 1;
  h.msg_id = 1;
  h.msg_len = 3;
  h.flags = header_flags::kLastFragment;
  const std::uint8_t abc[] = {'a', 'b', 'c'};
  const Frame f = build_frame(kClientIp, kServerIp, {40000, 50000}, h, abc);
  CHECK(bytes_of(f) == load_hex("data_abc.hex"));
  const Frame golden(load_hex("data_abc.hex"));
  const auto p = packet(golden);
  CHECK(p.header == h);
  CHECK(p.tuple == FourTuple{kClientIp, kServerIp, 40000, 50000});
  CHECK(std::vector<std::uint8_t>(p.payload.begin(), p.payload.end()) == std::vector<std::uint8_t>{'a', 'b', 'c'});
}

TEST_CASE("wire: golden SACK frame from the receiver") {
  // The receiver of a flow gets seq 1 and 3; its ACK is cum 2 with SACK [3,4).
  Link l;
  const std::vector<std::uint8_t> one{'x'};
  FlowState rx(kServerIp, {kClientIp, 80, 7000}, {50000, 40000}, {40000, 50000}, QueueId{0}, {}, false);
  std::vector<Frame> sent;
  l.tx.send_message(one);
  l.tx.send_message(one);
  l.tx.send_message(one);
  l.tx.transmit({}, sent);
  REQUIRE(sent.size() == 3);
  std::vector<Frame> acks;
  std::vector<DeliveredMessage> got;
  rx.on_data(packet(sent[0]), {}, acks, got);
  acks.clear();
  rx.on_data(packet(sent[2]), {}, acks, got);
  REQUIRE(acks.size() == 1);
  CHECK(bytes_of(acks[0]) == load_hex("sack_3_4.hex"));
}

TEST_CASE("wire: golden SYN frame") {
  MachnetHeader h;
  h.type = PacketType::kSyn;
  h.src_port = 20000;
  h.dst_port = 80;
  const auto payload = encode(SynPayload{4, 1, SprayMode::kOptimized});
  const Frame f = build_frame(kClientIp, kServerIp, {33000, 44000}, h, payload);
  CHECK(bytes_of(f) == load_hex("syn_n4.hex"));
}

TEST_CASE("wire: header layout and validation") {
  static_assert(kMachnetHeaderLen == 32);
  static_assert(kHeadersLen + kFragmentPayload <= kEthernetMtu);
  MachnetHeader h;
  h.type = PacketType::kFinAck;
  h.seq = 0xdeadbeef;
  std::array<std::uint8_t, kMachnetHeaderLen> raw{};
  encode_header(h, raw);
  CHECK(decode_header(raw) == h);
  auto bad = raw;
  bad[0] = 0;
  CHECK_FALSE(decode_header(bad));
  bad = raw;
  bad[2] = 2;
  CHECK_FALSE(decode_header(bad));
  bad = raw;
  bad[3] = 9;
  CHECK_FALSE(decode_header(bad));
  CHECK_FALSE(decode_header(std::span(raw).first(20)));

  // DATA whose fragment overruns msg_len is rejected.
  MachnetHeader d;
  d.type = PacketType::kData;
  d.frag_offset = 2;
  d.msg_len = 3;
  const std::uint8_t two[] = {1, 2};
  CHECK_FALSE(parse_packet(build_frame(kClientIp, kServerIp, {1, 2}, d, two)));
  d.msg_len = static_cast<std::uint32_t>(kMaxMessageSize + 1);
  CHECK_FALSE(parse_packet(build_frame(kClientIp, kServerIp, {1, 2}, d, two)));
  std::vector<std::uint8_t> big(kEthernetMtu - kHeadersLen + 1);
  CHECK_THROWS_AS(build_frame(kClientIp, kServerIp, {1, 2}, d, big), Error);
}

TEST_CASE("sack block encoding") {
  SackBlock b;
  b.ranges = {{3, 4}, {6, 9}};
  const auto enc = b.encode();
  CHECK(enc.size() == 2 + 16);
  const auto dec = SackBlock::decode(enc);
  REQUIRE(dec);
  CHECK(dec->ranges == b.ranges);
  SackBlock overlap;
  overlap.ranges = {{3, 6}, {5, 9}};
  CHECK_FALSE(SackBlock::decode(overlap.encode()));
  SackBlock touching;
  touching.ranges = {{3, 6}, {6, 9}};
  CHECK_FALSE(SackBlock::decode(touching.encode()));
  SackBlock nine;
  for (std::uint32_t i = 0; i < 9; ++i) nine.ranges.push_back({10 * i + 1, 10 * i + 2});
  CHECK_FALSE(SackBlock::decode(nine.encode()));
  CHECK_FALSE(SackBlock::decode(SackBlock{}.encode()));
}

TEST_CASE("fragmentation arithmetic") {
  CHECK(fragment_count(1) == 1);
  CHECK(fragment_count(1408) == 1);
  CHECK(fragment_count(1409) == 2);
  CHECK(fragment_count(8388608) == 5958);
  CHECK(8388608 - 5957 * 1408 == 1152);

  Link l;
  std::vector<Frame> out;
  l.tx.send_message({0x42});
  l.tx.transmit({}, out);
  REQUIRE(out.size() == 1);
  const auto p = packet(out[0]);
  CHECK(p.header.frag_offset == 0);
  CHECK(p.header.msg_len == 1);
  CHECK(p.header.has_flag(header_flags::kLastFragment));
  CHECK(p.header.seq == 1);

  CHECK_THROWS_AS(l.tx.send_message({}), Error);
  CHECK_THROWS_AS(l.tx.send_message(std::vector<std::uint8_t>(kMaxMessageSize + 1)), Error);
}

TEST_CASE("window: at most 64 fragments outstanding") {
  Link l;
  l.tx.send_message(ramp(100 * kFragmentPayload));
  std::vector<Frame> out;
  CHECK(l.tx.transmit({}, out) == 64);
  CHECK(l.tx.unacked_count() == 64);
  CHECK(l.tx.transmit({}, out) == 0);
}

TEST_CASE("8 MiB message: 5958 fragments, byte-identical reassembly") {
  Link l;
  const auto msg = ramp(kMaxMessageSize);
  l.tx.send_message(msg);
  std::vector<DeliveredMessage> got;
  std::size_t fragments = 0;
  std::uint32_t last_len = 0;
  VirtualTime now{};
  while (!l.tx.idle()) {
    std::vector<Frame> data;
    l.tx.transmit(now, data);
    std::vector<Frame> acks;
    for (const auto& f : data) {
      const auto p = packet(f);
      ++fragments;
      if (p.header.has_flag(header_flags::kLastFragment)) last_len = static_cast<std::uint32_t>(p.payload.size());
      l.rx.on_data(p, now, acks, got);
    }
    now += 100us;
    l.rx.on_timers(now, acks);
    for (const auto& a : acks) l.tx.on_ack(packet(a), now, data);
  }
  CHECK(fragments == 5958);
  CHECK(last_len == 1152);
  REQUIRE(got.size() == 1);
  CHECK(got[0].payload == msg);
  CHECK(l.tx.counters_balanced());
  CHECK(l.tx.counters().fragments_retransmitted == 0);
}

TEST_CASE("receiver: hole at 2 yields cumulative ack 2 and SACK [3,4)") {
  Link l;
  for (int i = 0; i < 3; ++i) l.tx.send_message({static_cast<std::uint8_t>(i)});
  std::vector<Frame> data;
  l.tx.transmit({}, data);
  std::vector<Frame> acks;
  std::vector<DeliveredMessage> got;
  l.rx.on_data(packet(data[0]), {}, acks, got);
  CHECK(acks.empty());  // first in-order frame: ACK is owed, not sent
  l.rx.on_data(packet(data[2]), {}, acks, got);
  REQUIRE(acks.size() == 1);
  const auto a = packet(acks[0]);
  CHECK(a.header.type == PacketType::kSack);
  CHECK(a.header.ack == 2);
  const auto sack = SackBlock::decode(a.payload);
  REQUIRE(sack);
  CHECK(sack->ranges == std::vector<SeqRange>{{3, 4}});
  CHECK(got.size() == 1);

  // Filling the hole releases messages 2 and 3 in order.
  acks.clear();
  l.rx.on_data(packet(data[1]), {}, acks, got);
  REQUIRE(got.size() == 3);
  CHECK(got[1].msg_id == 2);
  CHECK(got[2].msg_id == 3);
  CHECK(l.rx.rx_next_expected() == 4);

  // A duplicate is re-acked and not delivered again.
  acks.clear();
  l.rx.on_data(packet(data[1]), {}, acks, got);
  CHECK(acks.size() == 1);
  CHECK(got.size() == 3);
  CHECK(l.rx.counters().duplicates == 1);
}

TEST_CASE("receiver: ACK every two in-order frames or after 100 us") {
  Link l;
  for (int i = 0; i < 3; ++i) l.tx.send_message({1});
  std::vector<Frame> data;
  l.tx.transmit({}, data);
  std::vector<Frame> acks;
  std::vector<DeliveredMessage> got;
  l.rx.on_data(packet(data[0]), VirtualTime{}, acks, got);
  l.rx.on_data(packet(data[1]), VirtualTime{1us}, acks, got);
  CHECK(acks.size() == 1);
  l.rx.on_data(packet(data[2]), VirtualTime{2us}, acks, got);
  CHECK(acks.size() == 1);
  CHECK(l.rx.next_deadline() == VirtualTime{102us});
  l.rx.on_timers(VirtualTime{101us}, acks);
  CHECK(acks.size() == 1);
  l.rx.on_timers(VirtualTime{102us}, acks);
  REQUIRE(acks.size() == 2);
  CHECK(packet(acks[1]).header.ack == 4);
}

TEST_CASE("receiver: sequence beyond the window is dropped") {
  Link l;
  l.tx.send_message(ramp(70 * kFragmentPayload));
  std::vector<Frame> data;
  l.tx.transmit({}, data);
  // Deliver 1..64 except seq 1; then forge seq 65.
  std::vector<Frame> acks;
  std::vector<DeliveredMessage> got;
  auto p = packet(data[5]);
  MachnetHeader h = p.header;
  h.seq = 65;
  const Frame forged = build_frame(kClientIp, kServerIp, {40000, 50000}, h, p.payload);
  l.rx.on_data(packet(forged), {}, acks, got);
  CHECK(l.rx.counters().out_of_window == 1);
  CHECK(acks.empty());
}

TEST_CASE("sender: cumulative ack clears, empty acks change nothing, bogus acks are errors") {
  Link l;
  for (int i = 0; i < 4; ++i) l.tx.send_message({1});
  std::vector<Frame> data;
  l.tx.transmit({}, data);
  auto ack_frame = [](std::uint32_t cum) {
    MachnetHeader h;
    h.type = PacketType::kAck;
    h.src_port = 80;
    h.dst_port = 7000;
    h.ack = cum;
    return build_frame(kServerIp, kClientIp, {50001, 40001}, h, {});
  };
  std::vector<Frame> out;
  l.tx.on_ack(packet(ack_frame(1)), {}, out);
  CHECK(l.tx.unacked_count() == 4);
  CHECK(out.empty());
  l.tx.on_ack(packet(ack_frame(6)), {}, out);
  CHECK(l.tx.counters().protocol_errors == 1);
  CHECK(l.tx.unacked_count() == 4);
  l.tx.on_ack(packet(ack_frame(l.tx.next_tx_seq())), {}, out);
  CHECK(l.tx.unacked_count() == 0);
  CHECK(l.tx.idle());
  CHECK_FALSE(l.tx.rto_deadline());
  CHECK(l.tx.counters_balanced());
}

TEST_CASE("sender: third SACK reporting holes 3 and 4 retransmits both") {
  Link l;
  for (int i = 0; i < 8; ++i) l.tx.send_message({1});
  std::vector<Frame> data;
  l.tx.transmit({}, data);
  MachnetHeader h;
  h.type = PacketType::kSack;
  h.src_port = 80;
  h.dst_port = 7000;
  h.ack = 3;
  SackBlock s;
  s.ranges = {{5, 8}};
  const Frame sack = build_frame(kServerIp, kClientIp, {50001, 40001}, h, s.encode());
  std::vector<Frame> out;
  l.tx.on_ack(packet(sack), {}, out);
  CHECK(out.empty());
  CHECK(l.tx.unacked_count() == 3);  // 3, 4, 8
  l.tx.on_ack(packet(sack), {}, out);
  CHECK(out.empty());
  l.tx.on_ack(packet(sack), {}, out);
  REQUIRE(out.size() == 2);
  CHECK(packet(out[0]).header.seq == 3);
  CHECK(packet(out[1]).header.seq == 4);
  CHECK(l.tx.counters().fast_retransmits == 2);
}

TEST_CASE("sender: RTO doubles, caps at 1 s, resets on progress, gives up after 16") {
  Link l;
  l.tx.send_message({1});
  std::vector<Frame> out;
  l.tx.transmit({}, out);
  CHECK(l.tx.rto_deadline() == VirtualTime{10ms});
  VirtualTime now{};
  std::vector<VirtualDuration> rtos;
  for (int i = 0; i < 16; ++i) {
    now = *l.tx.rto_deadline();
    out.clear();
    CHECK(l.tx.on_timers(now, out));
    CHECK(out.size() == 1);
    rtos.push_back(l.tx.rto());
  }
  CHECK(rtos[0] == 20ms);
  CHECK(rtos[5] == 640ms);
  CHECK(rtos[6] == 1s);
  CHECK(rtos[15] == 1s);
  CHECK(l.tx.counters().fragments_retransmitted == 16);
  now = *l.tx.rto_deadline();
  CHECK_FALSE(l.tx.on_timers(now, out));
  CHECK(l.tx.reset());
  CHECK_THROWS_AS(l.tx.send_message({1}), Error);

  Link m;
  m.tx.send_message({1});
  m.tx.send_message({2});
  std::vector<Frame> d;
  m.tx.transmit({}, d);
  m.tx.on_timers(VirtualTime{10ms}, d);
  CHECK(m.tx.rto() == 20ms);
  MachnetHeader h;
  h.type = PacketType::kAck;
  h.ack = 2;
  m.tx.on_ack(packet(build_frame(kServerIp, kClientIp, {1, 2}, h, {})), VirtualTime{11ms}, d);
  CHECK(m.tx.rto() == 10ms);
  CHECK(m.tx.rto_deadline() == VirtualTime{21ms});
}

TEST_CASE("end to end: single lost fragment with SACK off recovers after exactly one RTO") {
  EngineConfig ec;
  ec.transport.sack_enabled = false;
  TwoHosts w(seeded(5), 1, 1, ec);
  auto srv = w.server->shim().attach(EnginePolicy::round_robin());
  srv.listen(80);
  auto cli = w.client->shim().attach(EnginePolicy::round_robin());
  const auto flow = cli.connect(kServerIp, 80);
  // Drop the first transmission of DATA seq 3.
  bool dropped = false;
  w.sim.fabric().set_drop_filter([&](const Frame& f) {
    const auto p = parse_packet(f);
    if (!dropped && p && p->header.type == PacketType::kData && p->header.seq == 3) {
      dropped = true;
      return true;
    }
    return false;
  });
  const auto msg = pattern(10 * kFragmentPayload, 1);
  cli.send(flow, msg);
  auto got = srv.recv(RecvMode::kBlocking, 1s);
  REQUIRE(got);
  CHECK(got->payload == msg);
  CHECK(dropped);
  const auto t = w.client->sidecar().engine(0).transport_totals();
  CHECK(t.rto_fired == 1);
  CHECK(t.fragments_retransmitted == 1);
  CHECK(t.fast_retransmits == 0);
}

TEST_CASE("end to end: loss 1 after establishment resets the flow after 16 retransmits") {
  TwoHosts w(seeded(6));
  auto srv = w.server->shim().attach(EnginePolicy::round_robin());
  srv.listen(80);
  auto cli = w.client->shim().attach(EnginePolicy::round_robin());
  const auto flow = cli.connect(kServerIp, 80);
  w.sim.run_for(1ms);
  w.sim.fabric().set_drop_filter([](const Frame&) { return true; });
  cli.send(flow, pattern(100, 2));
  w.sim.run_for(30s);
  const auto t = w.client->sidecar().engine(0).transport_totals();
  CHECK(t.fragments_retransmitted == 16);
  CHECK(w.client->sidecar().engine(0).stats().flows_reset == 1);
  bool reset_seen = false;
  for (const auto& ev : cli.take_events()) reset_seen |= ev.kind == EventKind::kFlowReset;
  CHECK(reset_seen);
  CHECK_THROWS_AS(cli.send(flow, pattern(10, 3)), Error);
}

TEST_CASE("end to end: no RTO on a clean fabric over 10^4 messages") {
  TwoHosts w(seeded(8), 2, 2);
  auto srv = w.server->shim().attach(EnginePolicy::round_robin());
  srv.listen(80);
  auto cli = w.client->shim().attach(EnginePolicy::round_robin());
  const auto flow = cli.connect(kServerIp, 80);
  std::size_t sent = 0;
  std::size_t received = 0;
  bool in_order = true;
  w.sim.add_poller([&] {
    bool did = false;
    while (sent < 10000 && cli.try_send(flow, std::vector<std::uint8_t>{static_cast<std::uint8_t>(sent), 1, 2})) {
      ++sent;
      did = true;
    }
    while (auto m = srv.recv(RecvMode::kNonBlocking)) {
      in_order &= m->payload[0] == static_cast<std::uint8_t>(received);
      ++received;
      did = true;
    }
    return did;
  });
  w.sim.run_until([&] { return received == 10000; }, 60s);
  CHECK(received == 10000);
  CHECK(in_order);
  std::uint64_t rto = 0;
  for (std::size_t e = 0; e < 2; ++e) {
    rto += w.client->sidecar().engine(e).transport_totals().rto_fired;
    rto += w.server->sidecar().engine(e).transport_totals().rto_fired;
  }
  CHECK(rto == 0);
  CHECK(w.sim.audit().ok());
}
