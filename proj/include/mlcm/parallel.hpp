#pragma once

// Minimal fork-join helper. Results never depend on the thread count: work
// items write into preallocated slots and exceptions are rethrown for the
// lowest failing index.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace mlcm {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> v{0};
  return v;
}
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

/// Caps worker threads. 0 restores the default (MLCM_THREADS or 1).
inline void set_max_threads(int n) { detail::thread_setting().store(std::max(0, n)); }

inline int max_threads() {
  int n = detail::thread_setting().load();
  if (n > 0) return n;
  if (const char* env = std::getenv("MLCM_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return 1;
}

/// Runs fn(i) for i in [0, n). Nested calls run serially.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = detail::in_parallel_region() ? 1 : max_threads();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    detail::in_parallel_region() = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    detail::in_parallel_region() = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mlcm
