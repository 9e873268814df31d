// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef POSTLAB_PARALLEL_HPP_
#define POSTLAB_PARALLEL_HPP_

#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace postlab {

// Number of workers used when a config does not say otherwise: the
// POSTLAB_WORKERS environment variable if set, else the hardware thread
// count. 1 means fully serial.
int default_workers();
void set_default_workers(int workers);  // process-wide override (CLI flag)
int resolve_workers(int requested);     // requested > 0 ? requested : default

// Static contiguous partition of [0, n) over `workers` threads. Each item is
// processed exactly once and the mapping from item to worker is a pure
// function of (n, workers), so results written to per-item slots are
// identical for any worker count as long as fn(i) itself is deterministic.
template <typename Fn>
void parallel_for(int64_t n, int workers, Fn&& fn) {
  if (n <= 0) return;
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mu;
  const int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int64_t lo = w * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace postlab

#endif  // POSTLAB_PARALLEL_HPP_
