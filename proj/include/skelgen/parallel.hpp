#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace skelgen {

// Process-wide cap on worker threads (set by the CLI --threads flag).
int max_threads();
void set_max_threads(int n);

// Runs fn(i) for i in [0, n). Work is claimed dynamically; callers that need
// deterministic results must write into per-index slots and reduce in order.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, int threads = 0) {
  const int cap = threads > 0 ? threads : max_threads();
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(cap, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace skelgen
