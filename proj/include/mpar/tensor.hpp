#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

#include "mpar/error.hpp"

namespace mpar {

// Row-major 2-d buffer. Sequence batches store (B, T*F) with t*F+f inside a row,
// which lets time-distributed ops reinterpret the same memory as (B*T, F).
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> d;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, T(0)) {}

  void resize(int r, int c) {
    rows = r;
    cols = c;
    d.assign(static_cast<size_t>(r) * c, T(0));
  }
  void zero() { std::fill(d.begin(), d.end(), T(0)); }
  T* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
  const T* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }
  T& at(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }
  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
};

inline int num_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("MPAR_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v > 64 ? 64 : v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw > 16 ? 16 : hw);
  }();
  return n;
}

// Static partition; each index is owned by exactly one worker, so results are
// bit-identical for any thread count.
template <class F>
void parallel_for(int64_t total, F&& body) {
  const int threads = num_threads();
  if (threads <= 1 || total < 2) {
    body(int64_t{0}, total);
    return;
  }
  const int use = static_cast<int>(std::min<int64_t>(threads, total));
  std::vector<std::thread> pool;
  pool.reserve(use);
  const int64_t chunk = (total + use - 1) / use;
  for (int t = 0; t < use; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min(total, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

namespace detail {
// Below this many multiply-adds, thread spawn cost dominates.
inline constexpr int64_t kParallelFlops = 1 << 18;
}

// C(M,N) = A(M,K) x B(K,N); += when accumulate.
template <class T>
void matmul_nn(const T* A, const T* B, T* C, int M, int K, int N, bool accumulate = false) {
  auto worker = [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* c = C + i * N;
      if (!accumulate)
        for (int j = 0; j < N; ++j) c[j] = T(0);
      const T* a = A + i * K;
      for (int k = 0; k < K; ++k) {
        const T aik = a[k];
        if (aik == T(0)) continue;
        const T* b = B + static_cast<int64_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += aik * b[j];
      }
    }
  };
  if (static_cast<int64_t>(M) * K * N < detail::kParallelFlops) {
    worker(0, M);
    return;
  }
  parallel_for(M, worker);
}

// C(M,N) = A(M,K) x B(N,K)^T.
template <class T>
void matmul_nt(const T* A, const T* B, T* C, int M, int K, int N, bool accumulate = false) {
  auto worker = [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T* a = A + i * K;
      T* c = C + i * N;
      for (int j = 0; j < N; ++j) {
        const T* b = B + static_cast<int64_t>(j) * K;
        T acc = T(0);
        for (int k = 0; k < K; ++k) acc += a[k] * b[k];
        if (accumulate)
          c[j] += acc;
        else
          c[j] = acc;
      }
    }
  };
  if (static_cast<int64_t>(M) * K * N < detail::kParallelFlops) {
    worker(0, M);
    return;
  }
  parallel_for(M, worker);
}

// C(K,N) = A(M,K)^T x B(M,N); += when accumulate.
template <class T>
void matmul_tn(const T* A, const T* B, T* C, int M, int K, int N, bool accumulate = false) {
  auto worker = [&](int64_t klo, int64_t khi) {
    if (!accumulate)
      for (int64_t k = klo; k < khi; ++k)
        for (int j = 0; j < N; ++j) C[k * N + j] = T(0);
    for (int i = 0; i < M; ++i) {
      const T* a = A + static_cast<int64_t>(i) * K;
      const T* b = B + static_cast<int64_t>(i) * N;
      for (int64_t k = klo; k < khi; ++k) {
        const T aik = a[k];
        if (aik == T(0)) continue;
        T* c = C + k * N;
        for (int j = 0; j < N; ++j) c[j] += aik * b[j];
      }
    }
  };
  if (static_cast<int64_t>(M) * K * N < detail::kParallelFlops) {
    worker(0, K);
    return;
  }
  parallel_for(K, worker);
}

// out(1,N) = column sums of A(M,N); += when accumulate.
template <class T>
void colsum(const T* A, T* out, int M, int N, bool accumulate = false) {
  if (!accumulate)
    for (int j = 0; j < N; ++j) out[j] = T(0);
  for (int i = 0; i < M; ++i) {
    const T* a = A + static_cast<int64_t>(i) * N;
    for (int j = 0; j < N; ++j) out[j] += a[j];
  }
}

}  // namespace mpar
