#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace relit {

namespace detail {
inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

// Number of worker threads used by parallel_for. Results never depend on it:
// every parallel loop in the library writes disjoint outputs per index.
inline void set_thread_count(int n) { detail::thread_setting().store(std::max(1, n)); }

inline int thread_count() { return detail::thread_setting().load(); }

// Calls fn(i) for i in [begin, end), statically chunked across threads.
// The exception from the lowest-indexed failing chunk is rethrown.
template <class Fn>
void parallel_for(int begin, int end, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  const int workers = std::min(thread_count(), n);
  if (workers == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
    const int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    pool.emplace_back([&, lo, hi, w] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace relit
