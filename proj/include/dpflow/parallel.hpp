#pragma once

#include <cstddef>
#include <functional>

namespace dpflow {

// Worker count from DPFLOW_WORKERS, default 1.
int worker_count();

// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index is
// visited exactly once; callers write results per index so the outcome does
// not depend on scheduling. The first exception thrown by any body is
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace dpflow
