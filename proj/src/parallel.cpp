#include "acc/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace acc {

namespace {

std::atomic<int> g_override{0};

int env_threads() {
    const char* v = std::getenv("ACC_THREADS");
    if (!v || !*v) return 0;
    const long n = std::strtol(v, nullptr, 10);
    return n > 0 ? static_cast<int>(n) : 1;
}

}  // namespace

int thread_count() {
    const int forced = g_override.load(std::memory_order_relaxed);
    if (forced > 0) return forced;
    const int capped = env_threads();
#ifdef _OPENMP
    const int avail = omp_get_max_threads();
#else
    const int avail = 1;
#endif
    if (capped > 0 && capped < avail) return capped;
    return avail;
}

void set_thread_count(int n) {
    g_override.store(n > 0 ? n : 0, std::memory_order_relaxed);
}

}  // namespace acc
