#pragma once

#include <cstddef>
#include <functional>

namespace krnet {

/// Worker count used by batched evaluation and training (default 1).
void set_num_threads(int n);
int num_threads();

/// Calls task(i) for i in [0, n) on up to num_threads() threads. Results must
/// be written to per-index slots so the outcome does not depend on the
/// thread count. The first exception thrown by a task is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task);

}  // namespace krnet
