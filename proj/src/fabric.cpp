#include "lcdnet/fabric.hpp"


#include "fabric_impl.hpp"
#include "lcdnet/errors.hpp"
#include "lcdnet/fabric_oracle.hpp"
#include "lcdnet/wire.hpp"

namespace lcdnet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<std::uint8_t, 12> tuple_bytes(const FourTuple& t) {
  return {static_cast<std::uint8_t>(t.src_ip.value >> 24), static_cast<std::uint8_t>(t.src_ip.value >> 16),
          static_cast<std::uint8_t>(t.src_ip.value >> 8),  static_cast<std::uint8_t>(t.src_ip.value),
          static_cast<std::uint8_t>(t.dst_ip.value >> 24), static_cast<std::uint8_t>(t.dst_ip.value >> 16),
          static_cast<std::uint8_t>(t.dst_ip.value >> 8),  static_cast<std::uint8_t>(t.dst_ip.value),
          static_cast<std::uint8_t>(t.src_port >> 8),      static_cast<std::uint8_t>(t.src_port),
          static_cast<std::uint8_t>(t.dst_port >> 8),      static_cast<std::uint8_t>(t.dst_port)};
}

RssKey derive_key(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x5253534b45590000ULL));
  RssKey key{};
  for (auto& b : key) b = static_cast<std::uint8_t>(rng());
  return key;
}

}  // namespace

std::uint32_t toeplitz_hash(const RssKey& key, const FourTuple& tuple) {
  const auto data = tuple_bytes(tuple);
  std::uint32_t hash = 0;
  std::uint32_t window = (std::uint32_t{key[0]} << 24) | (std::uint32_t{key[1]} << 16) |
                         (std::uint32_t{key[2]} << 8) | key[3];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int b = 7; b >= 0; --b) {
      if (data[i] & (1u << b)) hash ^= window;
      window <<= 1;
      if (key[i + 4] & (1u << b)) window |= 1;
    }
  }
  return hash;
}

ToeplitzTable::ToeplitzTable(const RssKey& key) {
  // window(k) = key bits k .. k+31
  auto window = [&key](std::size_t k) {
    std::uint32_t w = 0;
    for (std::size_t j = 0; j < 32; ++j) {
      const std::size_t bit = k + j;
      const bool set = (key[bit / 8] >> (7 - bit % 8)) & 1u;
      w = (w << 1) | static_cast<std::uint32_t>(set);
    }
    return w;
  };
  for (std::size_t i = 0; i < 12; ++i) {
    std::array<std::uint32_t, 8> per_bit{};
    for (std::size_t b = 0; b < 8; ++b) per_bit[b] = window(8 * i + b);
    for (std::size_t v = 0; v < 256; ++v) {
      std::uint32_t h = 0;
      for (std::size_t b = 0; b < 8; ++b) {
        if (v & (0x80u >> b)) h ^= per_bit[b];
      }
      table_[i][v] = h;
    }
  }
}

std::uint32_t ToeplitzTable::hash(const FourTuple& tuple) const {
  const auto data = tuple_bytes(tuple);
  std::uint32_t h = 0;
  for (std::size_t i = 0; i < data.size(); ++i) h ^= table_[i][data[i]];
  return h;
}

void FabricConfig::validate() const {
  if (!(loss_probability >= 0.0 && loss_probability <= 1.0)) {
    throw Error(Errc::kArgument, "loss_probability must be in [0, 1]");
  }
  if (!(reorder_probability >= 0.0 && reorder_probability <= 1.0)) {
    throw Error(Errc::kArgument, "reorder_probability must be in [0, 1]");
  }
  if (base_delay < VirtualDuration::zero() || delay_jitter < VirtualDuration::zero()) {
    throw Error(Errc::kArgument, "delays must be non-negative");
  }
}

// ---------------------------------------------------------------------------

SimNic::SimNic(HostId id, NicConfig config) : id_(id), config_(std::move(config)) {
  config_.validate();
  for (std::size_t q = 0; q < config_.num_queues; ++q) {
    rx_.push_back(std::make_unique<SpscRing<Frame>>(config_.queue_depth));
    tx_.push_back(std::make_unique<SpscRing<Frame>>(config_.queue_depth));
  }
  stats_.resize(config_.num_queues);
}

void SimNic::check(QueueId queue) const {
  if (queue.index() >= config_.num_queues) {
    throw Error(Errc::kArgument, "queue " + std::to_string(queue.index()) + " out of range (" +
                                     std::to_string(config_.num_queues) + " queues)");
  }
}

std::size_t SimNic::tx_burst(QueueId queue, std::span<Frame> frames) {
  check(queue);
  auto& ring = *tx_[queue.index()];
  std::size_t accepted = 0;
  for (auto& f : frames) {
    if (!f.fits_mtu(config_.mtu)) break;
    if (!ring.try_push(std::move(f))) break;
    ++accepted;
  }
  return accepted;
}

std::vector<Frame> SimNic::rx_burst(QueueId queue, std::size_t max) {
  check(queue);
  auto& ring = *rx_[queue.index()];
  std::vector<Frame> out;
  while (out.size() < max) {
    auto f = ring.try_pop();
    if (!f) break;
    out.push_back(std::move(*f));
  }
  return out;
}

// ---------------------------------------------------------------------------

Fabric::Impl::Impl(FabricConfig cfg)
    : config(std::move(cfg)), key(config.rss_key ? *config.rss_key : derive_key(config.rng_seed)), toeplitz(key) {}

QueueId Fabric::Impl::steer(HostId host, const FourTuple& tuple) const {
  std::uint32_t h = toeplitz.hash(tuple);
  if (config.hash_byteswap) h = __builtin_bswap32(h);
  return QueueId{tables[host][h % kIndirectionTableSize]};
}

void Fabric::Impl::send_from(HostId src, std::size_t stream_index, Frame frame) {
  ++stats.frames_sent;
  const auto dst = parse_ipv4_dst(frame.bytes());
  if (!dst || !by_ip.contains(dst->value)) {
    ++stats.frames_dropped_unroutable;
    return;
  }
  Stream& stream = streams[src][stream_index];
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double loss_draw = unit(stream.rng);
  const double reorder_draw = unit(stream.rng);
  std::int64_t delay = config.base_delay.count();
  if (config.delay_jitter.count() > 0) {
    std::uniform_int_distribution<std::int64_t> jitter(-config.delay_jitter.count(), config.delay_jitter.count());
    delay = std::max<std::int64_t>(0, delay + jitter(stream.rng));
  }
  if ((drop_filter && drop_filter(frame)) || loss_draw < config.loss_probability) {
    ++stats.frames_lost;
    return;
  }
  if (reorder_draw < config.reorder_probability && stream.last) {
    auto prev = events.find(*stream.last);
    if (prev != events.end() && prev->second.frame) {
      std::swap(*prev->second.frame, frame);
      ++stats.frames_reordered;
    }
  }
  const EventKey key{clock.now().time_since_epoch().count() + delay, next_seq++};
  events.emplace(key, Event{std::move(frame), {}});
  stream.last = key;
  ++stats.frames_in_flight;
}

void Fabric::Impl::deliver(Frame frame) {
  --stats.frames_in_flight;
  const auto dst = parse_ipv4_dst(frame.bytes());
  const HostId host = by_ip.at(dst->value);
  const auto tuple = parse_udp_tuple(frame.bytes());
  const QueueId q = tuple ? steer(host, *tuple) : QueueId{0};
  SimNic& nic = *hosts[host];
  if (nic.rx_ring(q.index()).try_push(std::move(frame))) {
    ++stats.frames_delivered;
    ++nic.stats(q.index()).delivered;
  } else {
    ++stats.frames_dropped_ring_full;
    ++nic.stats(q.index()).dropped_ring_full;
  }
}

// ---------------------------------------------------------------------------

Fabric::Fabric(FabricConfig config) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config));
}

Fabric::~Fabric() = default;

Nic& Fabric::attach_host(const NicConfig& config) {
  config.validate();
  if (impl_->by_ip.contains(config.local_ip.value)) {
    throw Error(Errc::kArgument, "duplicate host address " + config.local_ip.to_string());
  }
  const HostId id = impl_->hosts.size();
  impl_->hosts.push_back(std::make_unique<SimNic>(id, config));
  impl_->by_ip.emplace(config.local_ip.value, id);

  std::vector<std::uint16_t> table(kIndirectionTableSize);
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = static_cast<std::uint16_t>(i % config.num_queues);
  impl_->tables.push_back(std::move(table));

  std::vector<Impl::Stream> streams;
  for (std::size_t q = 0; q <= config.num_queues; ++q) {
    const std::uint64_t s = splitmix64(impl_->config.rng_seed ^ splitmix64((id << 20) | q));
    streams.push_back(Impl::Stream{std::mt19937_64(s), std::nullopt});
  }
  impl_->streams.push_back(std::move(streams));
  return *impl_->hosts.back();
}

std::size_t Fabric::host_count() const { return impl_->hosts.size(); }

std::optional<HostId> Fabric::host_of(Ipv4Addr ip) const {
  auto it = impl_->by_ip.find(ip.value);
  if (it == impl_->by_ip.end()) return std::nullopt;
  return it->second;
}

Nic& Fabric::nic(HostId host) { return *impl_->hosts.at(host); }

VirtualClock& Fabric::clock() { return impl_->clock; }
VirtualTime Fabric::now() const { return impl_->clock.now(); }

void Fabric::send(HostId src, Frame frame) {
  if (src >= impl_->hosts.size()) throw Error(Errc::kArgument, "unknown source host");
  impl_->send_from(src, impl_->hosts[src]->num_queues(), std::move(frame));
}

std::size_t Fabric::flush_tx() {
  std::size_t moved = 0;
  for (auto& host : impl_->hosts) {
    for (std::size_t q = 0; q < host->num_queues(); ++q) {
      auto& ring = host->tx_ring(q);
      while (auto f = ring.try_pop()) {
        ++host->stats(q).transmitted;
        impl_->send_from(host->id(), q, std::move(*f));
        ++moved;
      }
    }
  }
  return moved;
}

std::size_t Fabric::advance(VirtualDuration delta) {
  if (delta < VirtualDuration::zero()) throw Error(Errc::kArgument, "cannot advance by a negative delta");
  return advance_to(now() + delta);
}

std::size_t Fabric::advance_to(VirtualTime t) {
  std::size_t executed = 0;
  const auto limit = t.time_since_epoch().count();
  while (!impl_->events.empty() && impl_->events.begin()->first.first <= limit) {
    auto node = impl_->events.extract(impl_->events.begin());
    impl_->clock.advance_to(VirtualTime{VirtualDuration{node.key().first}});
    Impl::Event& ev = node.mapped();
    if (ev.frame) {
      impl_->deliver(std::move(*ev.frame));
    } else {
      ++impl_->stats.callbacks_fired;
      ev.callback();
    }
    ++executed;
  }
  impl_->clock.advance_to(t);
  return executed;
}

void Fabric::schedule(VirtualTime at, std::function<void()> callback) {
  const auto t = std::max(at, now());
  impl_->events.emplace(Impl::EventKey{t.time_since_epoch().count(), impl_->next_seq++},
                        Impl::Event{std::nullopt, std::move(callback)});
}

std::optional<VirtualTime> Fabric::next_event_time() const {
  if (impl_->events.empty()) return std::nullopt;
  return VirtualTime{VirtualDuration{impl_->events.begin()->first.first}};
}

bool Fabric::rx_pending(HostId host, QueueId queue) const {
  return !impl_->hosts.at(host)->rx_ring(queue.index()).empty();
}

const FabricStats& Fabric::stats() const { return impl_->stats; }

const QueueStats& Fabric::queue_stats(HostId host, QueueId queue) const {
  return impl_->hosts.at(host)->stats(queue.index());
}

void Fabric::set_drop_filter(std::function<bool(const Frame&)> filter) { impl_->drop_filter = std::move(filter); }

bool Fabric::inject(HostId host, QueueId queue, Frame frame) {
  auto& nic = *impl_->hosts.at(host);
  if (queue.index() >= nic.num_queues()) throw Error(Errc::kArgument, "queue out of range");
  return nic.rx_ring(queue.index()).try_push(std::move(frame));
}

// ---------------------------------------------------------------------------

const RssKey& FabricOracle::rss_key() const { return fabric_.impl_->key; }

std::span<const std::uint16_t> FabricOracle::indirection_table(HostId host) const {
  return fabric_.impl_->tables.at(host);
}

bool FabricOracle::hash_byteswap() const { return fabric_.impl_->config.hash_byteswap; }

QueueId FabricOracle::steer(HostId host, const FourTuple& tuple) const { return fabric_.impl_->steer(host, tuple); }

QueueId FabricOracle::steer(const Frame& frame, HostId host) const {
  const auto tuple = parse_udp_tuple(frame.bytes());
  return tuple ? fabric_.impl_->steer(host, *tuple) : QueueId{0};
}

}  // namespace lcdnet
