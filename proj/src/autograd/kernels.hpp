#pragma once

#include <cstddef>

namespace occlume::ag::kernels {

// Row-major dense products. Each output element is reduced in a fixed order
// and threads only split output rows, so results do not depend on the thread
// count. All variants accumulate into C.

/// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);
/// C[k,n] += A[m,k]^T * G[m,n]
void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
             std::size_t n);
/// C[m,k] += G[m,n] * B[k,n]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);

}  // namespace occlume::ag::kernels
