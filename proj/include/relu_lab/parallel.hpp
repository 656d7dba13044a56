#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace relu_lab {

/// Worker count: RELU_LAB_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_budget();
void set_thread_budget(std::size_t n);

/// Runs body(i) for i in [0, count) on up to thread_budget() threads.  Each
/// index is written by exactly one worker, so results stored per index keep
/// a deterministic order.  The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

template <class T, class F>
std::vector<T> parallel_map(std::size_t count, F&& f) {
  std::vector<T> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = f(i); });
  return out;
}

}  // namespace relu_lab
