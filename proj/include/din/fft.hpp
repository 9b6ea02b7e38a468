#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace din {

/// In-place iterative radix-2 FFT for a fixed power-of-two size.
class Fft {
 public:
  explicit Fft(std::size_t n);
  std::size_t size() const { return n_; }

  void forward(std::span<std::complex<double>> data) const;

  /// |X_k|^2 for k = 0..n/2 of a real frame of length n (unnormalized DFT).
  void power_spectrum(std::span<const double> frame, std::span<double> power) const;

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
  mutable std::vector<std::complex<double>> scratch_;
};

}  // namespace din
