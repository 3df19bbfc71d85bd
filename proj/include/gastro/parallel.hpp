#pragma once

#include <cstddef>
#include <functional>

namespace gastro {

// Worker count: GASTRO_THREADS if set and positive, else hardware concurrency.
int WorkerCount();

// Runs fn(i) for i in [begin, end). Each index is visited exactly once; callers
// write to per-index slots so results do not depend on scheduling.
void ParallelFor(std::size_t begin, std::size_t end,
                 const std::function<void(std::size_t)>& fn);

}  // namespace gastro
