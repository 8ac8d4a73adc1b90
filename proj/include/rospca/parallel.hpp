#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rospca {

/// Worker count for internal loops. ROSPCA_KIT_THREADS caps it; unset means
/// hardware concurrency.
inline unsigned thread_count()
{
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ROSPCA_KIT_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1)
        return static_cast<unsigned>(std::min<long>(cap, hw));
    } catch (...) {
    }
  }
  return hw;
}

/// Runs body(i) for i in [0, n) over contiguous chunks. Every index writes
/// only its own output slot, so results do not depend on scheduling. The
/// first exception in chunk order is rethrown after all workers join.
template <typename Body>
void parallel_for(std::size_t n, Body&& body)
{
  const std::size_t workers = std::min<std::size_t>(thread_count(), n);
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i)
      body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end)
      break;
    pool.emplace_back([&body, &errors, w, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i)
          body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool)
    t.join();
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

} // namespace rospca
