#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "din/tensor.hpp"

namespace din {

/// Gaussian N(mean, cov) of bonafide backbone embeddings. `precision` is the
/// inverse of the shrunk covariance cov + epsilon * I.
struct BonafideGaussian {
  std::vector<double> mean;
  Tensor cov;        // D x D, unbiased
  Tensor precision;  // D x D
  double epsilon = 0.0;
  std::size_t n_samples = 0;

  std::size_t dim() const { return mean.size(); }
};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Throws NumericalError when a pivot is not positive.
Tensor cholesky_lower(const Tensor& a);

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
Tensor spd_inverse(const Tensor& a);

/// Default shrinkage: factor * trace(cov) / D, or `factor` itself when the
/// trace is zero.
double default_shrinkage(const Tensor& cov, double factor = 1e-3);

/// Fits mean and unbiased covariance to the rows of `samples` (n x D) and
/// inverts cov + epsilon I. With one sample the covariance is zero.
BonafideGaussian fit_gaussian(const Tensor& samples, std::optional<double> epsilon = std::nullopt,
                              double shrinkage_factor = 1e-3);

/// File layout: "DING", version u32, D u32, epsilon f64, mean (D f64),
/// cov (D*D f64, row-major), precision (D*D f64).
inline constexpr std::uint32_t kGaussianFileVersion = 1;
std::string encode_gaussian(const BonafideGaussian& g);
BonafideGaussian decode_gaussian(std::string_view bytes);
void save_gaussian(const std::filesystem::path& path, const BonafideGaussian& g);
BonafideGaussian load_gaussian(const std::filesystem::path& path);

}  // namespace din
