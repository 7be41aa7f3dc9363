#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wonder::par {

// Execution mode for the data-parallel kernels. Every parallel kernel in the
// library has a serial twin reached through Mode::serial; both paths write
// each index's result to its own slot, so outputs are bitwise identical.
enum class Mode { serial, openmp };

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <class Body>
void for_index(std::ptrdiff_t count, Mode mode, Body&& body) {
    if (mode == Mode::openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
        return;
#endif
    }
    for (std::ptrdiff_t i = 0; i < count; ++i) body(i);
}

} // namespace wonder::par
