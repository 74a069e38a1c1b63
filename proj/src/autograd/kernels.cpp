#include "kernels.hpp"

#include <vector>

#include "occlume/common/parallel.hpp"

namespace occlume::ag::kernels {

namespace {
// Aim for roughly this many multiply-adds per chunk before splitting.
constexpr std::size_t kWorkPerChunk = 1 << 15;

std::size_t rows_per_chunk(std::size_t work_per_row) {
  return work_per_row == 0 ? 1 : kWorkPerChunk / work_per_row + 1;
}
}  // namespace

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  parallel_for(
      m,
      [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
          double* ci = c + i * n;
          const double* ai = a + i * k;
          for (std::size_t p = 0; p < k; ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += s * bp[j];
          }
        }
      },
      rows_per_chunk(k * n));
}

void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  parallel_for(
      k,
      [&](std::size_t p0, std::size_t p1) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g + i * n;
          const double* ai = a + i * k;
          for (std::size_t p = p0; p < p1; ++p) {
            const double s = ai[p];
            if (s == 0.0) continue;
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += s * gi[j];
          }
        }
      },
      rows_per_chunk(m * n));
}

void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  // Transpose B once so the inner loop is a contiguous axpy.
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  parallel_for(
      m,
      [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
          const double* gi = g + i * n;
          double* ci = c + i * k;
          for (std::size_t j = 0; j < n; ++j) {
            const double s = gi[j];
            if (s == 0.0) continue;
            const double* bj = bt.data() + j * k;
            for (std::size_t p = 0; p < k; ++p) ci[p] += s * bj[p];
          }
        }
      },
      rows_per_chunk(k * n));
}

}  // namespace occlume::ag::kernels
