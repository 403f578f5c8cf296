#pragma once

// Thread fan-out and bit-stable reductions.
//
// Work is split into fixed-size blocks whose boundaries depend only on the
// problem size, never on the thread count. Each block is reduced sequentially
// and the block partials are combined with a fixed pairwise tree, so results
// are identical for any SEMIGROUP_LAB_THREADS value.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sglab {

/// Worker count: SEMIGROUP_LAB_THREADS if set and positive, otherwise the
/// hardware concurrency (at least 1).
inline unsigned thread_budget() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SEMIGROUP_LAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(std::min<long>(v, 1024));
  }
  return hw;
}

/// Runs fn(i) for i in [0, n). fn must be safe to call concurrently for
/// distinct i. The first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  unsigned workers = std::min<std::size_t>(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Pairwise (cascade) sum over a span of partials with a fixed tree shape.
template <class T>
T pairwise_sum(const std::vector<T>& parts, std::size_t lo, std::size_t hi, const T& zero) {
  if (hi <= lo) return zero;
  if (hi - lo == 1) return parts[lo];
  std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(parts, lo, mid, zero) + pairwise_sum(parts, mid, hi, zero);
}

/// Deterministic sum of term(i) for i in [0, n). T needs operator+ and a zero.
template <class T, class Term>
T deterministic_sum(std::size_t n, const T& zero, Term&& term, std::size_t block = 1024) {
  if (n == 0) return zero;
  std::size_t blocks = (n + block - 1) / block;
  std::vector<T> partial(blocks, zero);
  parallel_for(blocks, [&](std::size_t b) {
    std::size_t lo = b * block;
    std::size_t hi = std::min(n, lo + block);
    T acc = zero;
    for (std::size_t i = lo; i < hi; ++i) acc = acc + term(i);
    partial[b] = acc;
  });
  return pairwise_sum(partial, 0, partial.size(), zero);
}

}  // namespace sglab
