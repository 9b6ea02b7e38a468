#include "din/fft.hpp"

#include <cmath>
#include <numbers>

#include "din/error.hpp"

namespace din {

Fft::Fft(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n), scratch_(n) {
  if (n < 2 || (n & (n - 1)) != 0) throw UsageError("fft size must be a power of two >= 2");
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(a), std::sin(a)};
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
}

void Fft::forward(std::span<std::complex<double>> data) const {
  if (data.size() != n_) throw UsageError("fft: wrong buffer length");
  for (std::size_t i = 0; i < n_; ++i)
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto t = twiddle_[k * step] * data[start + k + half];
        const auto u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
}

void Fft::power_spectrum(std::span<const double> frame, std::span<double> power) const {
  if (frame.size() != n_ || power.size() != n_ / 2 + 1)
    throw UsageError("power_spectrum: wrong buffer length");
  for (std::size_t i = 0; i < n_; ++i) scratch_[i] = {frame[i], 0.0};
  forward(scratch_);
  for (std::size_t k = 0; k <= n_ / 2; ++k) power[k] = std::norm(scratch_[k]);
}

}  // namespace din
