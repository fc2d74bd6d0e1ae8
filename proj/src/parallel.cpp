#include "lowreg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace lowreg {

namespace {

thread_local bool g_inside_parallel = false;

int detect_threads() {
  if (const char* env = std::getenv("LOWREG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace

int max_threads() {
  static const int n = detect_threads();
  return n;
}

void parallel_chunks(std::size_t n, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers = std::min<std::size_t>(max_threads(), n_chunks);

  if (workers <= 1 || g_inside_parallel) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const std::size_t begin = c * chunk_size;
      body(begin, std::min(begin + chunk_size, n));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    g_inside_parallel = true;
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) break;
      const std::size_t begin = c * chunk_size;
      body(begin, std::min(begin + chunk_size, n));
    }
    g_inside_parallel = false;
  };

  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
}

double parallel_sum(std::size_t n, std::size_t chunk_size,
                    const std::function<double(std::size_t, std::size_t)>& chunk_sum) {
  if (n == 0) return 0.0;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<double> partials(n_chunks, 0.0);
  parallel_chunks(n, chunk_size, [&](std::size_t begin, std::size_t end) {
    partials[begin / chunk_size] = chunk_sum(begin, end);
  });
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

void run_tasks(const std::vector<std::function<void()>>& tasks, int jobs) {
  if (tasks.empty()) return;
  jobs = std::max(1, jobs);
  const int workers = std::min<std::size_t>(jobs, tasks.size());

  if (workers == 1) {
    for (const auto& task : tasks) task();
    return;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    g_inside_parallel = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      tasks[i]();
    }
    g_inside_parallel = false;
  };

  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (int t = 1; t < workers; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
}

} // namespace lowreg
