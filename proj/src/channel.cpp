#include "lcdnet/channel.hpp"

namespace lcdnet {

void Wakeup::signal() {
  signals_.fetch_add(1, std::memory_order_relaxed);
  // Pairs with the fence in wait(): either the waiter sees the published
  // message, or we see the waiter and notify under the lock.
  std::atomic_thread_fence(std::memory_order_seq_cst);
  if (waiters_.load(std::memory_order_relaxed) > 0) {
    std::lock_guard lock(mu_);
    cv_.notify_all();
  }
}

Wakeup::WaitResult Wakeup::wait(const std::function<bool()>& ready,
                                std::optional<std::chrono::steady_clock::time_point> deadline) {
  WaitResult result;
  if (ready()) {
    result.ready = true;
    return result;
  }
  std::unique_lock lock(mu_);
  waiters_.fetch_add(1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_seq_cst);
  while (!ready()) {
    ++result.sleeps;
    if (deadline) {
      if (cv_.wait_until(lock, *deadline) == std::cv_status::timeout) break;
    } else {
      cv_.wait(lock);
    }
    std::atomic_thread_fence(std::memory_order_seq_cst);
    if (!ready()) ++result.empty_wakeups;
  }
  waiters_.fetch_sub(1, std::memory_order_relaxed);
  result.ready = ready();
  return result;
}

Channel::Channel(QueueId owner_engine, std::uint32_t app_id, std::size_t capacity)
    : owner_(owner_engine),
      app_id_(app_id),
      tx_(capacity),
      rx_(capacity),
      requests_(capacity),
      events_(capacity) {}

}  // namespace lcdnet
