#pragma once

// Include this instead of <omp.h>; kernels compile serially without OpenMP.

#if defined(_OPENMP)
#include <omp.h>
namespace bdsde {
constexpr bool kHaveOpenMP = true;
}
#else
namespace bdsde {
constexpr bool kHaveOpenMP = false;
}
inline int omp_get_max_threads() { return 1; }
inline int omp_get_thread_num() { return 0; }
inline void omp_set_num_threads(int) {}
#endif

namespace bdsde {

/// Every data-parallel kernel has a serial reference path. Both paths must
/// produce bit-identical results; the serial one is what the tests compare
/// against.
enum class Exec { Serial, Parallel };

inline int maxThreads() { return omp_get_max_threads(); }

inline void setThreads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace bdsde
