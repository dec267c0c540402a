#pragma once

#include <cstddef>
#include <functional>

namespace eisbayes {

// Worker cap from EIS_BAYES_THREADS (default 1). Read once per process.
int worker_count();

// Runs fn(i) for i in [0, n). With more than one worker the index range is
// split into contiguous chunks, one thread each; fn must only write to
// per-index slots so the result is identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace eisbayes
