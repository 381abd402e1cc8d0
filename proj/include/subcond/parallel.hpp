#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace subcond {

inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> n{std::max(1u, std::thread::hardware_concurrency())};
  return n;
}

inline void set_thread_count(unsigned n) { thread_setting() = std::max(1u, n); }
inline unsigned thread_count() { return thread_setting(); }

// Paths are grouped in fixed-size batches; batch b always draws from
// rng.substream(b) and batch results are merged in index order, so the
// outcome is identical for any thread count.
inline constexpr std::size_t kBatchSize = 256;

template <class Acc, class Body, class Merge>
Acc batched_reduce(std::size_t n_items, const RngStream& rng, const Acc& init, Body&& body,
                   Merge&& merge) {
  const std::size_t n_batches = (n_items + kBatchSize - 1) / kBatchSize;
  std::vector<Acc> partial(n_batches, init);

  auto run_batch = [&](std::size_t b) {
    RngStream stream = rng.substream(b);
    const std::size_t lo = b * kBatchSize;
    const std::size_t hi = std::min(n_items, lo + kBatchSize);
    for (std::size_t i = lo; i < hi; ++i) body(partial[b], stream, i);
  };

  const unsigned n_threads =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), n_batches));
  if (n_threads <= 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t b = next.fetch_add(1);
          if (b >= n_batches) return;
          try {
            run_batch(b);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            next = n_batches;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  Acc result = init;
  for (auto& p : partial) merge(result, std::move(p));
  return result;
}

// fn(RngStream&, index) -> T, results returned in index order
template <class T, class Fn>
std::vector<T> parallel_collect(std::size_t n_items, const RngStream& rng, Fn&& fn) {
  return batched_reduce(
      n_items, rng, std::vector<T>{},
      [&](std::vector<T>& acc, RngStream& s, std::size_t i) { acc.push_back(fn(s, i)); },
      [](std::vector<T>& out, std::vector<T>&& part) {
        out.insert(out.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
      });
}

}  // namespace subcond
