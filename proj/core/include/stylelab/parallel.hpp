#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace stylelab {

/// Worker count: STYLELAB_THREADS when set, otherwise hardware concurrency.
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n) on up to thread_budget() threads. Callers write
/// results into per-index slots and reduce them in index order, so the result
/// never depends on scheduling. The first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace stylelab
