#pragma once

#include <cstddef>
#include <functional>

namespace probsafe {

/// Worker count used when a caller passes 0: PROBSAFE_THREADS if set, else
/// std::thread::hardware_concurrency().
unsigned default_thread_count();

/// Splits [0, count) into contiguous chunks and runs `body(begin, end)` on up
/// to `threads` workers. Chunk boundaries depend only on `count` and the
/// chunk size, never on the thread count, so per-index results are identical
/// under any schedule. Exceptions from workers are rethrown (first one wins).
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = 256);

}  // namespace probsafe
