#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace splite {

/// Execution knobs shared by every kernel.
///
/// Work is always split into chunks of a fixed size that does not depend on
/// `threads`; workers only decide who runs which chunk. Every chunk performs
/// the same arithmetic in the same order regardless of the worker count, so
/// results are bit-identical for any parallelism degree.
struct ExecContext {
  int threads = 1;
};

inline constexpr Eigen::Index kRowChunk = 128;

/// Calls `fn(begin, end)` for consecutive ranges of length `chunk` covering
/// [0, n), distributing the ranges over `threads` workers.
template <typename Fn>
void parallel_chunks(Eigen::Index n, Eigen::Index chunk, int threads, Fn&& fn) {
  if (n <= 0) return;
  chunk = std::max<Eigen::Index>(chunk, 1);
  const Eigen::Index num_chunks = (n + chunk - 1) / chunk;
  const int workers = static_cast<int>(std::min<Eigen::Index>(std::max(threads, 1), num_chunks));
  if (workers <= 1) {
    for (Eigen::Index c = 0; c < num_chunks; ++c) fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const Eigen::Index c = next.fetch_add(1);
      if (c >= num_chunks) return;
      try {
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(num_chunks);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

/// out = lhs * rhs^T computed in fixed row chunks of `lhs`.
template <typename Lhs, typename Rhs, typename Out>
void chunked_matmul_transposed(const Lhs& lhs, const Rhs& rhs, Out& out, const ExecContext& ctx) {
  out.resize(lhs.rows(), rhs.rows());
  parallel_chunks(lhs.rows(), kRowChunk, ctx.threads, [&](Eigen::Index b, Eigen::Index e) {
    out.middleRows(b, e - b).noalias() = lhs.middleRows(b, e - b) * rhs.transpose();
  });
}

}  // namespace splite
