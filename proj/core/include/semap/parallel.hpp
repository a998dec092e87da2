#pragma once

#include <cstddef>
#include <functional>

namespace semap {

/// Process-wide worker count used by parallel sections (default 1).
void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, n). Work items must write disjoint outputs; results never
/// depend on the thread count because callers reduce per-item results in index order.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace semap
