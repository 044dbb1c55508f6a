#pragma once

#include <atomic>
#include <cstddef>
#include <new>
#include <optional>
#include <utility>
#include <vector>

namespace lcdnet {

/// Bounded single-producer/single-consumer ring. Producer calls try_push,
/// consumer calls try_pop; size() is exact only from a quiescent thread.
template <typename T>
class SpscRing {
 public:
  explicit SpscRing(std::size_t capacity) : slots_(capacity + 1), capacity_(capacity) {}

  SpscRing(const SpscRing&) = delete;
  SpscRing& operator=(const SpscRing&) = delete;

  bool try_push(T&& value) {
    const auto tail = tail_.load(std::memory_order_relaxed);
    const auto next = advance(tail);
    const auto head = head_.load(std::memory_order_acquire);
    if (next == head) return false;
    slots_[tail] = std::move(value);
    tail_.store(next, std::memory_order_release);
    const auto occupancy = next >= head ? next - head : next + slots_.size() - head;
    if (occupancy > high_water_.load(std::memory_order_relaxed)) {
      high_water_.store(occupancy, std::memory_order_relaxed);
    }
    return true;
  }

  std::optional<T> try_pop() {
    const auto head = head_.load(std::memory_order_relaxed);
    if (head == tail_.load(std::memory_order_acquire)) return std::nullopt;
    std::optional<T> value{std::move(slots_[head])};
    slots_[head] = T{};
    head_.store(advance(head), std::memory_order_release);
    return value;
  }

  bool empty() const {
    return head_.load(std::memory_order_acquire) == tail_.load(std::memory_order_acquire);
  }
  bool full() const { return size() == capacity_; }

  std::size_t size() const {
    const auto head = head_.load(std::memory_order_acquire);
    const auto tail = tail_.load(std::memory_order_acquire);
    return tail >= head ? tail - head : tail + slots_.size() - head;
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t high_water_mark() const { return high_water_.load(std::memory_order_relaxed); }

 private:
  std::size_t advance(std::size_t i) const { return i + 1 == slots_.size() ? 0 : i + 1; }

  std::vector<T> slots_;
  std::size_t capacity_;
  alignas(64) std::atomic<std::size_t> head_{0};
  alignas(64) std::atomic<std::size_t> tail_{0};
  std::atomic<std::size_t> high_water_{0};
};

}  // namespace lcdnet
