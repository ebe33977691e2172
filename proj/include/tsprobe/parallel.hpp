#pragma once

#include <cstdint>
#include <exception>
#include <mutex>

namespace tsprobe {

/// Runs body(i) for i in [0, n), in parallel when OpenMP is enabled. Each
/// index must write only to its own output slot. The first exception thrown
/// by any iteration is rethrown on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace tsprobe
