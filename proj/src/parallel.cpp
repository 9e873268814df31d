// Copyright 2026 The postlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "postlab/parallel.hpp"

#include <atomic>
#include <cstdlib>

namespace postlab {

namespace {
std::atomic<int> g_override{0};

int env_workers() {
  if (const char* env = std::getenv("POSTLAB_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}
}  // namespace

int default_workers() {
  const int o = g_override.load(std::memory_order_relaxed);
  return o >= 1 ? o : env_workers();
}

void set_default_workers(int workers) {
  g_override.store(workers >= 1 ? workers : 0, std::memory_order_relaxed);
}

int resolve_workers(int requested) {
  return requested >= 1 ? requested : default_workers();
}

}  // namespace postlab
