#pragma once

#include <cstddef>
#include <functional>

namespace cardiolens {

// Worker cap: min(hardware_concurrency, CARDIOLENS_THREADS). At least 1.
std::size_t max_threads();

// Runs fn(begin, end) over contiguous chunks of [0, n), possibly on multiple
// threads. Workers must write disjoint output slots; chunking is
// deterministic so results never depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace cardiolens
