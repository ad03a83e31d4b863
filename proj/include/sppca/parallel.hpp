#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace sppca {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> value{1};
  return value;
}
}  // namespace detail

/// Number of worker threads used by the dense kernels. Work is only ever
/// split across independent output rows, so results are bit-identical for
/// every thread count; `1` additionally avoids spawning threads at all.
inline unsigned threads() { return detail::thread_setting().load(); }

inline void set_threads(unsigned n) { detail::thread_setting().store(std::max(1u, n)); }

/// Reads SPPCA_THREADS; returns `fallback` when unset or unparsable.
inline unsigned threads_from_env(unsigned fallback) {
  const char* env = std::getenv("SPPCA_THREADS");
  if (env == nullptr) return fallback;
  try {
    const long v = std::stol(env);
    return v >= 1 ? static_cast<unsigned>(v) : fallback;
  } catch (...) {
    return fallback;
  }
}

/// Calls fn(lo, hi) on contiguous chunks of [begin, end).
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn, std::size_t min_chunk = 16) {
  if (end <= begin) return;
  const std::size_t count = end - begin;
  const std::size_t workers =
      std::min<std::size_t>(threads(), std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(begin, end);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  const std::size_t step = (count + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t lo = begin + w * step;
    const std::size_t hi = std::min(end, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  fn(begin, std::min(end, begin + step));
  for (auto& t : pool) t.join();
}

}  // namespace sppca
