#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace protoseg::kernels {

#ifdef _OPENMP
inline int max_threads() { return omp_get_max_threads(); }
inline int thread_id() { return omp_get_thread_num(); }
inline void set_threads(int n) { omp_set_num_threads(n); }
#else
inline int max_threads() { return 1; }
inline int thread_id() { return 0; }
inline void set_threads(int) {}
#endif

}  // namespace protoseg::kernels
