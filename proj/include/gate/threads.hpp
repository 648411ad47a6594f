#pragma once

#include <cstddef>
#include <functional>

namespace gate {

// Worker count from GATE_THREADS (default 1, clamped to [1, hardware threads]).
std::size_t worker_threads();

// Runs fn(i) for i in [0, n) over contiguous static chunks. Each index must write only
// its own outputs; results are then independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gate
