#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "circscope/common.hpp"

namespace circscope {

// Worker cap: CIRCSCOPE_THREADS when set, hardware concurrency otherwise.
int worker_cap();

// Static-chunked parallel loop. Callers write results into index-addressed
// slots so reductions stay deterministic regardless of the worker count.
template <typename Fn>
void parallel_for(Index n, Fn&& fn) {
  if (n <= 0) return;
  const int workers = std::min<Index>(worker_cap(), n);
  if (workers <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mu;
  const Index chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index lo = w * chunk;
    const Index hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (Index i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace circscope
