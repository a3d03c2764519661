#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace saspec {

/// 0 means one worker per hardware thread.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(begin, end) over fixed chunks of [0, count). Chunk boundaries do not depend on
/// the worker count.
template <class Body>
void parallel_chunks(std::uint64_t count, std::uint64_t chunk, int threads, Body body) {
  if (count == 0) return;
  chunk = std::max<std::uint64_t>(chunk, 1);
  std::uint64_t nchunks = (count + chunk - 1) / chunk;
  int workers = static_cast<int>(std::min<std::uint64_t>(resolve_threads(threads), nchunks));
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto run = [&]() {
    for (;;) {
      std::uint64_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      try {
        body(c * chunk, std::min(count, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
        next = nchunks;
        return;
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);
}

/// map(begin, end) -> T per chunk, then a pairwise tree reduction in index order.
template <class T, class Map, class Combine>
T parallel_reduce(std::uint64_t count, std::uint64_t chunk, int threads, Map map, Combine combine, T identity) {
  if (count == 0) return identity;
  chunk = std::max<std::uint64_t>(chunk, 1);
  std::uint64_t nchunks = (count + chunk - 1) / chunk;
  std::vector<T> parts(nchunks, identity);
  parallel_chunks(count, chunk, threads, [&](std::uint64_t b, std::uint64_t e) { parts[b / chunk] = map(b, e); });
  while (parts.size() > 1) {
    std::vector<T> up;
    up.reserve((parts.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < parts.size(); i += 2) up.push_back(combine(parts[i], parts[i + 1]));
    if (parts.size() % 2) up.push_back(parts.back());
    parts = std::move(up);
  }
  return parts[0];
}

}  // namespace saspec
