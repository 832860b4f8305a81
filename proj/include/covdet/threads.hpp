#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace covdet {

/// Caps the OpenMP worker count; n <= 0 leaves the runtime default. Results
/// never depend on the thread count, only throughput does.
inline void set_thread_cap(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline double wall_time() {
#ifdef _OPENMP
    return omp_get_wtime();
#else
    return 0.0;
#endif
}

}  // namespace covdet
