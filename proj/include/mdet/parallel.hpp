#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mdet {

/// Runs body(k) for k in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically; the first exception is rethrown after all workers join.
inline void parallel_for(long n, int threads, const std::function<void(long)>& body) {
  const int workers = static_cast<int>(std::min<long>(std::max(threads, 1), std::max(n, 1L)));
  if (workers <= 1) {
    for (long k = 0; k < n; ++k) body(k);
    return;
  }
  std::atomic<long> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (long k = next++; k < n; k = next++) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mdet
