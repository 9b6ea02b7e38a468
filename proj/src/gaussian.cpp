#include "din/gaussian.hpp"

#include <cmath>

#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

Tensor cholesky_lower(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw UsageError("cholesky: matrix must be square");
  const std::size_t n = a.dim(0);
  Tensor l({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l.at(j, k) * l.at(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NumericalError("cholesky: matrix not positive definite at pivot " + std::to_string(j) +
                           "; increase the covariance shrinkage epsilon");
    const double ljj = std::sqrt(diag);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor spd_inverse(const Tensor& a) {
  const Tensor l = cholesky_lower(a);
  const std::size_t n = l.dim(0);
  // Solve L Y = I column by column, then A^-1 = Y^T Y.
  Tensor linv({n, n});
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t i = col; i < n; ++i) {
      double s = (i == col) ? 1.0 : 0.0;
      for (std::size_t k = col; k < i; ++k) s -= l.at(i, k) * linv.at(k, col);
      linv.at(i, col) = s / l.at(i, i);
    }
  }
  Tensor inv({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += linv.at(k, i) * linv.at(k, j);
      inv.at(i, j) = s;
      inv.at(j, i) = s;
    }
  return inv;
}

double default_shrinkage(const Tensor& cov, double factor) {
  const std::size_t d = cov.dim(0);
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov.at(i, i);
  return trace > 0.0 ? factor * trace / static_cast<double>(d) : factor;
}

BonafideGaussian fit_gaussian(const Tensor& samples, std::optional<double> epsilon,
                              double shrinkage_factor) {
  if (samples.rank() != 2 || samples.dim(0) == 0 || samples.dim(1) == 0)
    throw DataError("gaussian fit: need at least one embedding");
  const std::size_t n = samples.dim(0), d = samples.dim(1);
  BonafideGaussian g;
  g.n_samples = n;
  g.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) g.mean[j] += samples.at(i, j);
  for (auto& m : g.mean) m /= static_cast<double>(n);

  g.cov = Tensor({d, d});
  if (n > 1) {
    std::vector<double> r(d);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) r[j] = samples.at(i, j) - g.mean[j];
      for (std::size_t a = 0; a < d; ++a) {
        const double ra = r[a];
        double* row = g.cov.data() + a * d;
        for (std::size_t b = 0; b <= a; ++b) row[b] += ra * r[b];
      }
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        const double v = g.cov.at(a, b) * inv;
        g.cov.at(a, b) = v;
        g.cov.at(b, a) = v;
      }
  }
  g.epsilon = epsilon.value_or(default_shrinkage(g.cov, shrinkage_factor));
  if (!(g.epsilon >= 0.0)) throw UsageError("gaussian fit: epsilon must be >= 0");
  Tensor shrunk = g.cov;
  for (std::size_t i = 0; i < d; ++i) shrunk.at(i, i) += g.epsilon;
  g.precision = spd_inverse(shrunk);
  return g;
}

std::string encode_gaussian(const BonafideGaussian& g) {
  io::ByteWriter w;
  const std::size_t d = g.dim();
  w.put_bytes("DING");
  w.put_u32(kGaussianFileVersion);
  w.put_u32(static_cast<std::uint32_t>(d));
  w.put_f64(g.epsilon);
  for (double v : g.mean) w.put_f64(v);
  for (double v : g.cov.values()) w.put_f64(v);
  for (double v : g.precision.values()) w.put_f64(v);
  return w.bytes();
}

BonafideGaussian decode_gaussian(std::string_view bytes) {
  io::ByteReader r(bytes, "gaussian stats");
  if (r.get_bytes(4) != "DING") throw DataError("gaussian stats: bad magic");
  if (r.get_u32() != kGaussianFileVersion) throw DataError("gaussian stats: unsupported version");
  const std::size_t d = r.get_u32();
  BonafideGaussian g;
  g.epsilon = r.get_f64();
  g.mean.resize(d);
  for (auto& v : g.mean) v = r.get_f64();
  g.cov = Tensor({d, d});
  for (auto& v : g.cov.values()) v = r.get_f64();
  g.precision = Tensor({d, d});
  for (auto& v : g.precision.values()) v = r.get_f64();
  if (r.remaining() != 0) throw DataError("gaussian stats: trailing bytes");
  return g;
}

void save_gaussian(const std::filesystem::path& path, const BonafideGaussian& g) {
  io::atomic_write(path, encode_gaussian(g));
}

BonafideGaussian load_gaussian(const std::filesystem::path& path) {
  return decode_gaussian(io::read_file(path));
}

}  // namespace din
