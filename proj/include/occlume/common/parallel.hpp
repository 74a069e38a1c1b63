#pragma once

#include <cstddef>
#include <functional>

namespace occlume {

/// Number of worker threads used by parallel_for (>= 1).
std::size_t num_threads();

/// Resize the global pool. 0 means "use OCCLUME_THREADS or 1".
void set_num_threads(std::size_t n);

/// Thread count requested through the OCCLUME_THREADS variable, or 0.
std::size_t threads_from_env();

/// Split [0, n) into contiguous chunks and run body(begin, end) on each.
/// Chunks never overlap, so kernels writing disjoint outputs stay bitwise
/// reproducible for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace occlume
