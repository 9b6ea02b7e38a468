#include <cmath>
#include <vector>

#include "din/rng.hpp"
#include "din/simd.hpp"
#include "doctest.h"

using namespace din;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

// Reference C += A * B with explicit strides.
void naive_gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                const std::vector<double>& a, std::size_t lda, const std::vector<double>& b,
                std::size_t ldb, std::vector<double>& c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? a[p * lda + i] : a[i * lda + p];
        const double bv = tb ? b[j * ldb + p] : b[p * ldb + j];
        s += static_cast<long double>(av) * bv;
      }
      c[i * ldc + j] += static_cast<double>(s);
    }
}

void check_close(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    REQUIRE(std::abs(got[i] - want[i]) <= tol * (1.0 + std::abs(want[i])));
}

}  // namespace

TEST_SUITE("simd") {
TEST_CASE("scalar and avx2 kernels agree on every entry point") {
  const simd::Kernels* avx = simd::avx2_kernels();
  if (!avx || !simd::cpu_has_avx2()) {
    MESSAGE("AVX2 unavailable; equivalence test skipped");
    return;
  }
  const simd::Kernels& sc = simd::scalar_kernels();
  Rng rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 33u, 100u, 257u}) {
    const auto x = random_vec(n, rng), y = random_vec(n, rng);
    CHECK(std::abs(sc.dot(x.data(), y.data(), n) - avx->dot(x.data(), y.data(), n)) <=
          1e-12 * (1.0 + n));
    CHECK(std::abs(sc.sum(x.data(), n) - avx->sum(x.data(), n)) <= 1e-12 * (1.0 + n));
    auto y1 = y, y2 = y;
    sc.axpy(0.37, x.data(), y1.data(), n);
    avx->axpy(0.37, x.data(), y2.data(), n);
    check_close(y1, y2, 1e-14);
    std::vector<double> z1(n), z2(n);
    sc.scale_shift(x.data(), 1.7, -0.3, z1.data(), n);
    avx->scale_shift(x.data(), 1.7, -0.3, z2.data(), n);
    check_close(z1, z2, 1e-14);
  }
}

TEST_CASE("gemm variants match a long-double reference for odd shapes") {
  Rng rng(12);
  std::vector<const simd::Kernels*> tables{&simd::scalar_kernels()};
  if (simd::avx2_kernels() && simd::cpu_has_avx2()) tables.push_back(simd::avx2_kernels());
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {4, 8, 16}, {9, 17, 5}, {13, 31, 29}, {32, 9, 64}};
  for (const auto* ker : tables) {
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      const std::size_t lda = k + 2, ldb = n + 1, ldc = n + 3;
      {
        const auto a = random_vec(m * lda, rng), b = random_vec(k * ldb, rng);
        auto c = random_vec(m * ldc, rng), want = c;
        ker->gemm_nn(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc);
        naive_gemm(false, false, m, n, k, a, lda, b, ldb, want, ldc);
        check_close(c, want, 1e-12);
      }
      {
        const std::size_t ldbt = k + 1;
        const auto a = random_vec(m * lda, rng), b = random_vec(n * ldbt, rng);
        auto c = random_vec(m * ldc, rng), want = c;
        ker->gemm_nt(m, n, k, a.data(), lda, b.data(), ldbt, c.data(), ldc);
        naive_gemm(false, true, m, n, k, a, lda, b, ldbt, want, ldc);
        check_close(c, want, 1e-12);
      }
      {
        const std::size_t ldat = m + 2;
        const auto a = random_vec(k * ldat, rng), b = random_vec(k * ldb, rng);
        auto c = random_vec(m * ldc, rng), want = c;
        ker->gemm_tn(m, n, k, a.data(), ldat, b.data(), ldb, c.data(), ldc);
        naive_gemm(true, false, m, n, k, a, ldat, b, ldb, want, ldc);
        check_close(c, want, 1e-12);
      }
    }
  }
}

TEST_CASE("forcing an isa switches the active table") {
  const simd::Isa before = simd::active_isa();
  simd::force_isa(simd::Isa::kScalar);
  CHECK(simd::active_isa() == simd::Isa::kScalar);
  CHECK(&simd::active() == &simd::scalar_kernels());
  CHECK(simd::isa_name(simd::Isa::kScalar) == "scalar");
  simd::force_isa(before);
}
}
