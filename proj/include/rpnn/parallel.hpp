#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <Eigen/Core>

namespace rpnn {

/// Worker count: hardware concurrency, capped by RPNN_THREADS when set.
inline int worker_count() {
#ifdef _OPENMP
  int n = omp_get_num_procs();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("RPNN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return std::max(n, 1);
}

/// Applies worker_count() to OpenMP and Eigen. Call once per process.
inline void configure_threads() {
  const int n = worker_count();
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
  Eigen::setNbThreads(n);
}

// Static partition over [0, n). Every index is written by exactly one worker,
// so results do not depend on scheduling.
template <class Fn>
void parallel_for(std::ptrdiff_t n, Fn&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#else
  for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#endif
}

inline void log_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

inline void log_info(const std::string& msg) {
  if (std::getenv("RPNN_QUIET") == nullptr) std::cerr << msg << '\n';
}

}  // namespace rpnn
