#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace lowreg {

/// Worker cap for data-parallel loops: LOWREG_THREADS if set, otherwise the
/// hardware concurrency.
int max_threads();

/// Run `body(begin, end)` over [0, n) split into fixed-size chunks.
/// The chunk grid depends only on n and chunk_size, never on the number of
/// workers, so per-chunk results are identical no matter how the chunks were
/// scheduled. Calls nested inside another parallel region run serially.
void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t)>& body);

/// Chunked sum with a deterministic reduction order: partials are stored per
/// chunk and added sequentially in chunk order.
double parallel_sum(std::size_t n, std::size_t chunk_size,
                    const std::function<double(std::size_t, std::size_t)>& chunk_sum);

/// Fan a task list out over `jobs` dedicated workers (the ablation grid and
/// batch experiments). Tasks run whole; loops inside them stay serial.
void run_tasks(const std::vector<std::function<void()>>& tasks, int jobs);

} // namespace lowreg
