#pragma once

#include <cstddef>
#include <functional>

namespace seismo {

// Process-wide cap on worker threads (0 = hardware concurrency).
void set_thread_limit(std::size_t n);
std::size_t thread_limit();

// Calls fn(i) for i in [0, n) on up to thread_limit() threads. Work is
// statically partitioned, so any per-index output is independent of the
// thread count. The first exception thrown by fn is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace seismo
