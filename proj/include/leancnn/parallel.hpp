#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace leancnn {

// Process-wide execution settings. Kernels split work only over independent
// output slots (samples, rows), so results are bit-identical whether or not
// the pool is used; `deterministic` additionally pins everything to the
// calling thread.
struct ExecutionPolicy {
  std::size_t threads = 1;
  bool deterministic = true;

  std::size_t effective_threads() const noexcept {
    return deterministic ? 1 : std::max<std::size_t>(1, threads);
  }
};

inline ExecutionPolicy& execution_policy() noexcept {
  static ExecutionPolicy policy;
  return policy;
}

inline void set_execution_policy(ExecutionPolicy policy) noexcept { execution_policy() = policy; }

// Scoped override, restores the previous policy on destruction.
class ExecutionScope {
 public:
  explicit ExecutionScope(ExecutionPolicy policy) : saved_(execution_policy()) {
    execution_policy() = policy;
  }
  ~ExecutionScope() { execution_policy() = saved_; }
  ExecutionScope(const ExecutionScope&) = delete;
  ExecutionScope& operator=(const ExecutionScope&) = delete;

 private:
  ExecutionPolicy saved_;
};

// Runs fn(i) for i in [0, n). Each index is processed by exactly one worker;
// the first exception thrown is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(n, execution_policy().effective_threads());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace leancnn
