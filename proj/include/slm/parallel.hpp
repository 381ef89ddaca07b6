#pragma once

#include <cstddef>
#include <functional>

namespace slm {

/// Number of worker threads used by parallel_for (hardware concurrency,
/// overridable with the SLM_THREADS environment variable).
unsigned worker_count();

/// Calls fn(i) for every i in [0, n) across worker threads. Each index runs
/// exactly once; the first exception thrown is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace slm
