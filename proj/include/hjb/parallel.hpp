#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include <omp.h>

namespace hjb {

/// Serial runs the plain loop (the reference path); Parallel distributes
/// iterations over an OpenMP team. Kernels produce bit-identical results
/// either way because every iteration writes only its own output slot.
enum class Execution { Serial, Parallel };

/// HJB_WORKERS if set and positive, otherwise the OpenMP default team size.
int default_workers();

/// Runs body(i) for i in [0, n). Exceptions thrown by the body are captured
/// and the first one is rethrown after the loop.
template <class Body>
void for_each_index(std::size_t n, Execution exec, int workers, Body&& body) {
    if (exec == Execution::Serial || workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const int team = workers > 0 ? workers : default_workers();
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(team)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace hjb
