#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace scom {

inline int thread_count() {
  if (const char* env = std::getenv("SCOM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n). Results must go to per-index slots; reduction
/// order is then up to the caller, keeping output independent of scheduling.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(n, thread_count());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace scom
