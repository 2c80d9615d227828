#pragma once

#include <cstddef>
#include <functional>

namespace otgate {

/// Worker cap: OTGATE_THREADS when set (>=1), else hardware concurrency.
unsigned max_threads();

/// Runs fn(0..n-1) across up to max_threads() workers. Each index is
/// processed exactly once; callers write results into preallocated slots so
/// output is independent of scheduling. The first exception thrown by any
/// worker is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace otgate
