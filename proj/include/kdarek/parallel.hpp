#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kdarek {

// Serial reference loop. Kept as its own entry point so tests can compare
// the OpenMP path against it bit-for-bit.
template <typename Fn>
void serial_for(std::size_t n, Fn&& fn) {
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

// Data-parallel loop over [0, n). Every iteration must write only to its own
// output slot; under that contract the result is identical to serial_for
// regardless of thread count. jobs <= 1 dispatches to the serial reference.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
#ifdef _OPENMP
  if (jobs > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  serial_for(n, fn);
}

inline int hardware_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kdarek
