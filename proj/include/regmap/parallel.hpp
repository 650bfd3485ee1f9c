#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

#include <omp.h>

namespace regmap {

inline void set_thread_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

inline int thread_count() { return omp_get_max_threads(); }

/// Runs fn(i) for i in [0, n) across threads; the first exception is rethrown.
/// Results must be written by index so the outcome is independent of scheduling.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  std::exception_ptr error;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace regmap
