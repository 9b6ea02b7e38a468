#pragma once

#include <cstddef>
#include <string_view>

/// Data-parallel inner loops used by the network layers. Every kernel has a
/// portable scalar reference; an AVX2+FMA variant is selected at runtime when
/// the CPU supports it. The two agree to rounding (reduction order differs).
namespace din::simd {

enum class Isa { kScalar, kAvx2 };

struct Kernels {
  /// sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  /// y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
  /// y[i] = x[i] * scale + shift
  void (*scale_shift)(const double* x, double scale, double shift, double* y, std::size_t n);
  /// C[m x n] += A[m x k] * B[k x n]   (row-major, leading dims given)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  /// C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
  /// C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double* c, std::size_t ldc);
};

const Kernels& scalar_kernels();
/// nullptr when the binary was built without AVX2 support.
const Kernels* avx2_kernels();

bool cpu_has_avx2();

/// The kernel table in use. Chosen once from the CPU features, overridable by
/// the DIN_SIMD environment variable ("scalar" or "avx2") or `force_isa`.
const Kernels& active();
Isa active_isa();
void force_isa(Isa isa);
std::string_view isa_name(Isa isa);

}  // namespace din::simd
