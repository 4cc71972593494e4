#pragma once

#include <cstddef>
#include <functional>

namespace fabseg {

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// write results into per-index slots so the output does not depend on
/// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fabseg
