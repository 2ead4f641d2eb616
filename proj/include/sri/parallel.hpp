#pragma once

#include <cstddef>
#include <functional>

namespace sri {

// Worker count used when a caller passes threads <= 0: the SRI_THREADS
// environment variable when set, otherwise the hardware concurrency.
int default_threads();

// Runs fn(i) for i in [0, n). Tasks communicate only through their own result
// slots; determinism comes from indexing, never from scheduling. The first
// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace sri
