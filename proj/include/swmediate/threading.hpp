#pragma once

#include <functional>

namespace swmediate {

// Worker cap: SWMEDIATE_THREADS when set (>= 1), otherwise the hardware
// concurrency.
int max_threads();

// Runs body(0..n-1) across up to `threads` workers (0 = max_threads()).
// Callers write results into per-index slots, so scheduling order never
// changes the outcome; the first exception is rethrown after all workers
// finish.
void parallel_for(long n, const std::function<void(long)>& body,
                  int threads = 0);

}  // namespace swmediate
