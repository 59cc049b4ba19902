#pragma once

#include <functional>

namespace retinavit {

// Worker cap: RETINAVIT_THREADS if set (>=1), else hardware concurrency.
int worker_count();

// Splits [0, n) into one contiguous chunk per worker and runs
// fn(worker_index, begin, end) on each. Chunk boundaries depend only on n
// and the worker count, so reductions done in worker order are
// deterministic for a fixed thread configuration.
void parallel_chunks(int n, const std::function<void(int, int, int)>& fn);

}  // namespace retinavit
