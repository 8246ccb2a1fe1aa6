#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace billiard {

/// Worker count: BILLIARD_THREADS when set (>=1), else hardware concurrency.
int thread_count();

/// Run fn(i) for i in [0, n) on the worker pool. Tasks must be independent;
/// results must not depend on scheduling (callers write to disjoint slots).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace billiard
