#pragma once

#include <cstddef>
#include <functional>

namespace radiodx {

/// Worker count: RADIODX_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// must write only to its own output slot; the first exception thrown by any
/// body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace radiodx
