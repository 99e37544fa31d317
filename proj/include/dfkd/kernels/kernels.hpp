#pragma once
// Dense double-precision inner loops used by the tensor engine.
//
// Every variant in this file computes bitwise-identical results to the scalar
// reference. The reduction order is part of the contract:
//   gemm: C[i][j] accumulates A[i][p]*B[p][j] for p = 0..k-1 in order, one
//         product at a time, starting from the existing C[i][j].
//   dot:  four interleaved partial sums (lane l takes indices i % 4 == l over
//         the largest multiple of 4), combined as (s0+s1)+(s2+s3), then the
//         tail is added sequentially.
// The build disables floating-point contraction so no variant fuses a*b+c.

#include <cstddef>
#include <string_view>
#include <vector>

namespace dfkd::kernels {

struct KernelTable {
  const char* name;
  // C[m x n] += A[m x k] * B[k x n]; row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = x + y, out = x * y (out may alias x or y)
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the build has no AVX2 variant.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

// Kernel table in use. Chosen once at startup: the AVX2 table when both the
// build and the CPU support it, unless DFKD_SIMD=scalar is set.
const KernelTable& active();

// Force a specific table ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name);

std::vector<const KernelTable*> available_tables();

}  // namespace dfkd::kernels
