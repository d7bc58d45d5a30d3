#pragma once

#include <cstddef>
#include <functional>

namespace esh {

/// Worker count: hardware concurrency, capped by the ESH_THREADS
/// environment variable when it holds a positive integer.
std::size_t worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are
/// disjoint; the call returns after every chunk has finished. Exceptions
/// thrown by a chunk are rethrown on the calling thread.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace esh
