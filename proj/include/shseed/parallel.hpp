#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace shseed {

/// Worker count used by parallel_for: the override if set, else $SHSEED_THREADS, else the
/// hardware count.
unsigned worker_count();
/// Overrides the worker count; 0 restores the default.
void set_worker_count(unsigned count);

/// Runs body(begin, end, chunk) over [0, count) split into fixed chunks of `grain`.
/// Chunk boundaries depend only on count and grain, never on the thread count, so
/// per-chunk results merged in chunk order are deterministic.
template <typename Body>
void parallel_for(std::size_t count, std::size_t grain, Body&& body) {
  if (count == 0) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (count + grain - 1) / grain;
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_count(), chunks));
  if (threads <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) body(c * grain, std::min(count, (c + 1) * grain), c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        body(c * grain, std::min(count, (c + 1) * grain), c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::size_t chunk_count(std::size_t count, std::size_t grain) {
  grain = std::max<std::size_t>(grain, 1);
  return (count + grain - 1) / grain;
}

}  // namespace shseed
