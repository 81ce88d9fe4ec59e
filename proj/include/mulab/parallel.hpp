#pragma once

#include <cstddef>
#include <functional>

namespace mulab {

/// Worker count: MU_LAB_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
unsigned worker_count();

/// Calls body(i) for i in [0, count). Iterations must be independent. The
/// first exception thrown by any iteration is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace mulab
