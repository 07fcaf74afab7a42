#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace smloc {

/// Runs fn(chunk, begin, end) over fixed-size chunks of [0, n). Chunk
/// boundaries depend only on n and chunk_size, so per-chunk partial results
/// reduced in chunk order are identical for any worker count.
template <class Fn>
void for_each_chunk(std::size_t n, std::size_t chunk_size, std::size_t workers, Fn&& fn) {
  chunk_size = std::max<std::size_t>(1, chunk_size);
  const std::size_t chunks = (n + chunk_size - 1) / chunk_size;
  auto run = [&](std::size_t c) {
    const std::size_t b = c * chunk_size;
    fn(c, b, std::min(n, b + chunk_size));
  };
  workers = std::min(std::max<std::size_t>(1, workers), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) {
        try {
          run(c);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  for_each_chunk(n, 1, workers, [&](std::size_t, std::size_t b, std::size_t) { fn(b); });
}

}  // namespace smloc
