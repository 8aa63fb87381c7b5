// OpenMP loop kernels with a serial reference path.
//
// Every parallel stage in the toolkit funnels through these helpers:
// jobs <= 1 runs the plain serial loop (the reference implementation),
// jobs > 1 runs the OpenMP version. Work items write to preallocated,
// disjoint output slots and reductions use a fixed block decomposition,
// so results are bit-identical for any job count.
#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slotfuse {

inline int hardware_jobs() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  if (jobs <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(jobs)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    fn(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

// Number of fixed reduction blocks. Independent of the job count so that
// serial and parallel runs sum the same partials in the same order.
inline constexpr std::size_t kReductionBlocks = 64;

// Sums term(i) for i in [0, n) via fixed blocks combined in block order.
template <typename Term>
double blocked_sum(std::size_t n, int jobs, Term&& term) {
  if (n == 0) return 0.0;
  const std::size_t blocks = n < kReductionBlocks ? n : kReductionBlocks;
  std::vector<double> partial(blocks, 0.0);
  parallel_for(blocks, jobs, [&](std::size_t b) {
    const std::size_t lo = n * b / blocks;
    const std::size_t hi = n * (b + 1) / blocks;
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += term(i);
    partial[b] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

// Vector-valued variant: accumulate(i, out) must add row i into out.
template <typename Accumulate>
void blocked_vector_sum(std::size_t n, std::size_t dim, int jobs, std::vector<double>& out,
                        Accumulate&& accumulate) {
  out.assign(dim, 0.0);
  if (n == 0) return;
  const std::size_t blocks = n < kReductionBlocks ? n : kReductionBlocks;
  std::vector<std::vector<double>> partial(blocks, std::vector<double>(dim, 0.0));
  parallel_for(blocks, jobs, [&](std::size_t b) {
    const std::size_t lo = n * b / blocks;
    const std::size_t hi = n * (b + 1) / blocks;
    for (std::size_t i = lo; i < hi; ++i) accumulate(i, partial[b]);
  });
  for (const auto& p : partial) {
    for (std::size_t j = 0; j < dim; ++j) out[j] += p[j];
  }
}

}  // namespace slotfuse
