#pragma once

#include <cstddef>

namespace acc {

// Worker count for data-parallel kernels. Resolution order: value set via
// set_thread_count (nonzero), else ACC_THREADS from the environment, else
// the OpenMP default. Always >= 1.
int thread_count();

// Override the worker count for this process; 0 restores automatic resolution.
void set_thread_count(int n);

// Static-schedule parallel map over [0, n). Bodies must write disjoint state;
// under that contract the result is identical to the serial loop for any
// worker count, which keeps every output byte-reproducible regardless of
// ACC_THREADS. Small ranges run inline: a fork costs more than the loop.
inline constexpr std::size_t kParallelGrain = 64;

template <typename F>
void parallel_for(std::size_t n, F&& body) {
    const int workers = thread_count();
    if (workers <= 1 || n < kParallelGrain) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
#pragma omp parallel for num_threads(workers) schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        body(static_cast<std::size_t>(i));
    }
}

}  // namespace acc
