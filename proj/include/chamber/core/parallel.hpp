#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace chamber {

/// Process-wide worker count for data-parallel kernels. Every kernel splits
/// work so that each output element is produced by exactly one thread with a
/// fixed accumulation order, so results are bit-identical for any count.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over a static contiguous partition of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

} // namespace chamber
