#pragma once

#include <cstddef>
#include <functional>

namespace semsplat {

// Worker cap for internal parallel loops. Defaults to SEMSPLAT_THREADS or 1.
int thread_count();
void set_thread_count(int threads);

// Runs body(i) for i in [0, count). Iterations must write disjoint outputs;
// callers reduce per-iteration partials in index order, so results do not
// depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace semsplat
