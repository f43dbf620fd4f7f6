#pragma once

#include <atomic>
#include <cstdint>

#include "circscope/common.hpp"

namespace circscope {

// Process-wide instrumentation of forward/backward tape traversals. Every
// method scoring run is counted against these, which is how the cost contracts
// (EAP: 2 forwards + 1 backward per pair; activation patching: N+2 forwards)
// are asserted in tests and surfaced in CLI reports.
class PassCounters {
 public:
  void reset() {
    forwards_.store(0, std::memory_order_relaxed);
    backwards_.store(0, std::memory_order_relaxed);
  }

  std::uint64_t forwards() const { return forwards_.load(std::memory_order_relaxed); }
  std::uint64_t backwards() const { return backwards_.load(std::memory_order_relaxed); }

  // budget < 0 disables the check.
  void set_forward_budget(std::int64_t budget) { budget_.store(budget, std::memory_order_relaxed); }
  std::int64_t forward_budget() const { return budget_.load(std::memory_order_relaxed); }

  void count_forward() {
    const auto n = forwards_.fetch_add(1, std::memory_order_relaxed) + 1;
    const auto b = budget_.load(std::memory_order_relaxed);
    if (b >= 0 && static_cast<std::int64_t>(n) > b) {
      throw PassBudgetError("forward-pass budget of " + std::to_string(b) + " exceeded");
    }
  }

  void count_backward() { backwards_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> forwards_{0};
  std::atomic<std::uint64_t> backwards_{0};
  std::atomic<std::int64_t> budget_{-1};
};

PassCounters& pass_counters();

}  // namespace circscope
