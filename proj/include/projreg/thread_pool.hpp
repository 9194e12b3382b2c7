#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "projreg/errors.hpp"

namespace projreg {

// Worker width for sweep parallelism: the requested width (or the hardware
// concurrency when unset), capped by the PROJREG_THREADS environment
// variable.  Always at least 1.
inline int worker_count(int requested = 0) {
  int width = requested;
  if (width <= 0) {
    width = static_cast<int>(std::thread::hardware_concurrency());
    if (width <= 0) width = 1;
  }
  if (const char* env = std::getenv("PROJREG_THREADS")) {
    const std::string v = env;
    std::size_t pos = 0;
    long cap = 0;
    try {
      cap = std::stol(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != v.size() || v.empty() || cap < 1) {
      throw ConfigError("PROJREG_THREADS must be a positive integer, got '" +
                        v + "'");
    }
    width = std::min<long>(width, cap);
  }
  return std::max(width, 1);
}

// Runs fn(0..count-1) on at most `width` workers.  Results must be written to
// per-index slots by the caller; the first exception is rethrown after all
// workers drain.  width <= 1 runs inline, which keeps single-threaded runs
// trivially deterministic and debuggable.
inline void parallel_for(int count, int width,
                         const std::function<void(int)>& fn) {
  if (count <= 0) return;
  width = std::min(std::max(width, 1), count);
  if (width == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }

  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(width));
  for (int w = 0; w < width; ++w) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace projreg
