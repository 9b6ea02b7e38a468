#include "din/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "din/error.hpp"
#include "din/simd.hpp"

namespace din {

// ---------------------------------------------------------------- store

Parameter& ParameterStore::add(std::string name, Tensor value, bool trainable, LrGroup group) {
  if (contains(name)) throw UsageError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  if (trainable) p->grad = Tensor(value.shape());
  p->value = std::move(value);
  p->trainable = trainable;
  p->group = group;
  params_.push_back(std::move(p));
  return *params_.back();
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p->name == name; });
}

Parameter& ParameterStore::get(std::string_view name) {
  for (auto& p : params_)
    if (p->name == name) return *p;
  throw UsageError("unknown parameter: " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw UsageError("unknown parameter: " + std::string(name));
}

std::size_t ParameterStore::remove_prefix(std::string_view prefix) {
  const auto before = params_.size();
  std::erase_if(params_, [&](const auto& p) { return p->name.starts_with(prefix); });
  return before - params_.size();
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_)
    if (p->trainable) p->grad.fill(0.0);
}

bool ParameterStore::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](const auto& p) { return p->value.all_finite(); });
}

GradientTape GradientTape::collect(const ParameterStore& store) {
  GradientTape tape;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    tape.names.push_back(store[i].name);
    tape.grads.push_back(store[i].grad);
  }
  return tape;
}

const Tensor& GradientTape::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return grads[i];
  throw UsageError("no gradient for " + std::string(name));
}

double GradientTape::l2_norm() const {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

Tensor kaiming_normal(std::vector<std::size_t> shape, std::size_t fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  const double stddev = std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.values()) v = stddev * standard_normal(rng);
  return t;
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel) throw UsageError("convolution kernel larger than padded input");
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

void require_rank4(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 4 || x.dim(1) != channels)
    throw UsageError(std::string(who) + ": expected N x " + std::to_string(channels) +
                     " x H x W input, got " + x.shape_string());
}

void require_cache(bool cached, const char* who) {
  if (!cached) throw UsageError(std::string(who) + ": backward without a training-mode forward");
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ParameterStore& store, const std::string& name, std::size_t in_ch,
               std::size_t out_ch, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
               std::size_t pad_h, std::size_t pad_w, std::uint64_t seed, LrGroup group)
    : in_ch_(in_ch), out_ch_(out_ch), kh_(kernel_h), kw_(kernel_w), stride_(stride), ph_(pad_h),
      pw_(pad_w) {
  const std::size_t fan_in = in_ch * kernel_h * kernel_w;
  w_ = &store.add(name + ".weight",
                  kaiming_normal({out_ch, fan_in}, fan_in, derive_seed(seed, name, 0)), true, group);
}

MapShape Conv2d::out_shape(MapShape in) const {
  return {out_ch_, conv_out_size(in.h, kh_, stride_, ph_), conv_out_size(in.w, kw_, stride_, pw_)};
}

std::uint64_t Conv2d::flops(MapShape in) const {
  const auto o = out_shape(in);
  return 2ULL * o.elements() * in_ch_ * kh_ * kw_;
}

void Conv2d::im2col(const double* img, std::size_t h, std::size_t w, double* cols) const {
  const std::size_t oh = conv_out_size(h, kh_, stride_, ph_), ow = conv_out_size(w, kw_, stride_, pw_);
  std::size_t row = 0;
  for (std::size_t c = 0; c < in_ch_; ++c)
    for (std::size_t ky = 0; ky < kh_; ++ky)
      for (std::size_t kx = 0; kx < kw_; ++kx, ++row) {
        double* dst = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(ph_);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pw_);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                ix < static_cast<std::ptrdiff_t>(w);
            dst[oy * ow + ox] = inside ? img[(c * h + static_cast<std::size_t>(iy)) * w +
                                             static_cast<std::size_t>(ix)]
                                       : 0.0;
          }
        }
      }
}

void Conv2d::col2im(const double* cols, std::size_t h, std::size_t w, double* img) const {
  const std::size_t oh = conv_out_size(h, kh_, stride_, ph_), ow = conv_out_size(w, kw_, stride_, pw_);
  std::size_t row = 0;
  for (std::size_t c = 0; c < in_ch_; ++c)
    for (std::size_t ky = 0; ky < kh_; ++ky)
      for (std::size_t kx = 0; kx < kw_; ++kx, ++row) {
        const double* src = cols + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(ph_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pw_);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            img[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                src[oy * ow + ox];
          }
        }
      }
}

Tensor Conv2d::forward(const Tensor& x, Mode mode) {
  require_rank4(x, in_ch_, "conv2d");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto o = out_shape({in_ch_, h, w});
  const std::size_t k = in_ch_ * kh_ * kw_, p = o.h * o.w;
  Tensor y({n, out_ch_, o.h, o.w});
  std::vector<double> cols(k * p);
  const auto& ker = simd::active();
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.data() + i * in_ch_ * h * w, h, w, cols.data());
    ker.gemm_nn(out_ch_, p, k, w_->value.data(), k, cols.data(), p, y.data() + i * out_ch_ * p, p);
  }
  cached_ = mode == Mode::kTrain;
  if (cached_) x_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  require_cache(cached_, "conv2d");
  const std::size_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const auto o = out_shape({in_ch_, h, w});
  if (dy.shape() != std::vector<std::size_t>{n, out_ch_, o.h, o.w})
    throw UsageError("conv2d backward: gradient shape mismatch");
  const std::size_t k = in_ch_ * kh_ * kw_, p = o.h * o.w;
  Tensor dx(x_.shape());
  std::vector<double> cols(k * p), dcols(k * p);
  const auto& ker = simd::active();
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = dy.data() + i * out_ch_ * p;
    im2col(x_.data() + i * in_ch_ * h * w, h, w, cols.data());
    ker.gemm_nt(out_ch_, k, p, g, p, cols.data(), p, w_->grad.data(), k);
    std::fill(dcols.begin(), dcols.end(), 0.0);
    ker.gemm_tn(k, p, out_ch_, w_->value.data(), k, g, p, dcols.data(), p);
    col2im(dcols.data(), h, w, dx.data() + i * in_ch_ * h * w);
  }
  cached_ = false;
  x_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------- depthwise

DepthwiseConv2d::DepthwiseConv2d(ParameterStore& store, const std::string& name,
                                 std::size_t channels, std::size_t kernel_h, std::size_t kernel_w,
                                 std::size_t stride, std::uint64_t seed, LrGroup group)
    : ch_(channels), kh_(kernel_h), kw_(kernel_w), stride_(stride), ph_((kernel_h - 1) / 2),
      pw_((kernel_w - 1) / 2) {
  w_ = &store.add(name + ".weight",
                  kaiming_normal({channels, kernel_h * kernel_w}, kernel_h * kernel_w,
                                 derive_seed(seed, name, 0)),
                  true, group);
}

MapShape DepthwiseConv2d::out_shape(MapShape in) const {
  return {ch_, conv_out_size(in.h, kh_, stride_, ph_), conv_out_size(in.w, kw_, stride_, pw_)};
}

std::uint64_t DepthwiseConv2d::flops(MapShape in) const {
  return 2ULL * out_shape(in).elements() * kh_ * kw_;
}

namespace {

// Output columns [lo, hi) whose input column ox*stride + kx - pad is in range.
void valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                 std::size_t pad, std::size_t& lo, std::size_t& hi) {
  lo = 0;
  while (lo < out && lo * stride + k < pad) ++lo;
  hi = lo;
  while (hi < out && hi * stride + k < pad + in) ++hi;
}

}  // namespace

Tensor DepthwiseConv2d::forward(const Tensor& x, Mode mode) {
  require_rank4(x, ch_, "depthwise conv");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto o = out_shape({ch_, h, w});
  Tensor y({n, ch_, o.h, o.w});
  const auto& ker = simd::active();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < ch_; ++c) {
      const double* in = x.data() + (i * ch_ + c) * h * w;
      double* out = y.data() + (i * ch_ + c) * o.h * o.w;
      const double* wt = w_->value.data() + c * kh_ * kw_;
      for (std::size_t ky = 0; ky < kh_; ++ky) {
        std::size_t ylo, yhi;
        valid_range(o.h, h, ky, stride_, ph_, ylo, yhi);
        for (std::size_t kx = 0; kx < kw_; ++kx) {
          const double wv = wt[ky * kw_ + kx];
          std::size_t xlo, xhi;
          valid_range(o.w, w, kx, stride_, pw_, xlo, xhi);
          if (xlo >= xhi) continue;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const double* irow = in + (oy * stride_ + ky - ph_) * w + (xlo * stride_ + kx - pw_);
            double* orow = out + oy * o.w + xlo;
            if (stride_ == 1) {
              ker.axpy(wv, irow, orow, xhi - xlo);
            } else {
              for (std::size_t j = 0; j < xhi - xlo; ++j) orow[j] += wv * irow[j * stride_];
            }
          }
        }
      }
    }
  cached_ = mode == Mode::kTrain;
  if (cached_) x_ = x;
  return y;
}

Tensor DepthwiseConv2d::backward(const Tensor& dy) {
  require_cache(cached_, "depthwise conv");
  const std::size_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const auto o = out_shape({ch_, h, w});
  if (dy.shape() != std::vector<std::size_t>{n, ch_, o.h, o.w})
    throw UsageError("depthwise backward: gradient shape mismatch");
  Tensor dx(x_.shape());
  const auto& ker = simd::active();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < ch_; ++c) {
      const double* in = x_.data() + (i * ch_ + c) * h * w;
      double* din = dx.data() + (i * ch_ + c) * h * w;
      const double* g = dy.data() + (i * ch_ + c) * o.h * o.w;
      const double* wt = w_->value.data() + c * kh_ * kw_;
      double* gw = w_->grad.data() + c * kh_ * kw_;
      for (std::size_t ky = 0; ky < kh_; ++ky) {
        std::size_t ylo, yhi;
        valid_range(o.h, h, ky, stride_, ph_, ylo, yhi);
        for (std::size_t kx = 0; kx < kw_; ++kx) {
          const double wv = wt[ky * kw_ + kx];
          std::size_t xlo, xhi;
          valid_range(o.w, w, kx, stride_, pw_, xlo, xhi);
          if (xlo >= xhi) continue;
          double acc = 0.0;
          for (std::size_t oy = ylo; oy < yhi; ++oy) {
            const std::size_t off = (oy * stride_ + ky - ph_) * w + (xlo * stride_ + kx - pw_);
            const double* grow = g + oy * o.w + xlo;
            if (stride_ == 1) {
              acc += ker.dot(grow, in + off, xhi - xlo);
              ker.axpy(wv, grow, din + off, xhi - xlo);
            } else {
              for (std::size_t j = 0; j < xhi - xlo; ++j) {
                acc += grow[j] * in[off + j * stride_];
                din[off + j * stride_] += wv * grow[j];
              }
            }
          }
          gw[ky * kw_ + kx] += acc;
        }
      }
    }
  cached_ = false;
  x_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------- pointwise

PointwiseConv2d::PointwiseConv2d(ParameterStore& store, const std::string& name,
                                 std::size_t in_ch, std::size_t out_ch, std::size_t stride,
                                 std::uint64_t seed, LrGroup group)
    : in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
  w_ = &store.add(name + ".weight",
                  kaiming_normal({out_ch, in_ch}, in_ch, derive_seed(seed, name, 0)), true, group);
}

MapShape PointwiseConv2d::out_shape(MapShape in) const {
  return {out_ch_, conv_out_size(in.h, 1, stride_, 0), conv_out_size(in.w, 1, stride_, 0)};
}

std::uint64_t PointwiseConv2d::flops(MapShape in) const {
  return 2ULL * out_shape(in).elements() * in_ch_;
}

Tensor PointwiseConv2d::forward(const Tensor& x, Mode mode) {
  require_rank4(x, in_ch_, "pointwise conv");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto o = out_shape({in_ch_, h, w});
  const std::size_t p = o.h * o.w;

  Tensor xs;
  if (stride_ == 1) {
    xs = x;
  } else {
    xs = Tensor({n, in_ch_, o.h, o.w});
    for (std::size_t i = 0; i < n * in_ch_; ++i)
      for (std::size_t oy = 0; oy < o.h; ++oy)
        for (std::size_t ox = 0; ox < o.w; ++ox)
          xs[i * p + oy * o.w + ox] = x[i * h * w + oy * stride_ * w + ox * stride_];
  }

  Tensor y({n, out_ch_, o.h, o.w});
  const auto& ker = simd::active();
  for (std::size_t i = 0; i < n; ++i)
    ker.gemm_nn(out_ch_, p, in_ch_, w_->value.data(), in_ch_, xs.data() + i * in_ch_ * p, p,
                y.data() + i * out_ch_ * p, p);
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    xs_ = std::move(xs);
    in_shape_ = x.shape();
  }
  return y;
}

Tensor PointwiseConv2d::backward(const Tensor& dy) {
  require_cache(cached_, "pointwise conv");
  const std::size_t n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
  const std::size_t oh = xs_.dim(2), ow = xs_.dim(3), p = oh * ow;
  if (dy.shape() != std::vector<std::size_t>{n, out_ch_, oh, ow})
    throw UsageError("pointwise backward: gradient shape mismatch");
  const auto& ker = simd::active();
  Tensor dxs({n, in_ch_, oh, ow});
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = dy.data() + i * out_ch_ * p;
    ker.gemm_nt(out_ch_, in_ch_, p, g, p, xs_.data() + i * in_ch_ * p, p, w_->grad.data(), in_ch_);
    ker.gemm_tn(in_ch_, p, out_ch_, w_->value.data(), in_ch_, g, p, dxs.data() + i * in_ch_ * p, p);
  }
  cached_ = false;
  xs_ = Tensor();
  if (stride_ == 1) return dxs;
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < n * in_ch_; ++i)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        dx[i * h * w + oy * stride_ * w + ox * stride_] = dxs[i * p + oy * ow + ox];
  return dx;
}

// ---------------------------------------------------------------- batch norm

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels,
                     double eps, double momentum, LrGroup group)
    : ch_(channels), eps_(eps), momentum_(momentum) {
  gamma_ = &store.add(name + ".gamma", Tensor({channels}, 1.0), true, group);
  beta_ = &store.add(name + ".beta", Tensor({channels}, 0.0), true, group);
  mean_ = &store.add(name + ".running_mean", Tensor({channels}, 0.0), false, group);
  var_ = &store.add(name + ".running_var", Tensor({channels}, 1.0), false, group);
}

namespace {

// Channel c of sample i spans `inner` contiguous values.
struct BnLayout {
  std::size_t n, inner;
};

BnLayout bn_layout(const Tensor& x, std::size_t ch) {
  if ((x.rank() != 2 && x.rank() != 4) || x.dim(1) != ch)
    throw UsageError("batch norm: expected N x " + std::to_string(ch) + " [x H x W], got " +
                     x.shape_string());
  return {x.dim(0), x.rank() == 4 ? x.dim(2) * x.dim(3) : 1};
}

}  // namespace

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  const auto [n, inner] = bn_layout(x, ch_);
  const std::size_t count = n * inner;
  const auto& ker = simd::active();
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(ch_);

  for (std::size_t c = 0; c < ch_; ++c) {
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += ker.sum(x.data() + (i * ch_ + c) * inner, inner);
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* px = x.data() + (i * ch_ + c) * inner;
        for (std::size_t j = 0; j < inner; ++j) ss += (px[j] - mean) * (px[j] - mean);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
      mean_->value[c] = (1.0 - momentum_) * mean_->value[c] + momentum_ * mean;
      var_->value[c] = (1.0 - momentum_) * var_->value[c] + momentum_ * unbiased;
    } else {
      mean = mean_->value[c];
      var = var_->value[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + eps_);
    const double g = gamma_->value[c], b = beta_->value[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * ch_ + c) * inner;
      ker.scale_shift(x.data() + off, inv_std[c], -mean * inv_std[c], xhat.data() + off, inner);
      ker.scale_shift(xhat.data() + off, g, b, y.data() + off, inner);
    }
  }
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  require_cache(cached_, "batch norm");
  if (!dy.same_shape(xhat_)) throw UsageError("batch norm backward: gradient shape mismatch");
  const auto [n, inner] = bn_layout(dy, ch_);
  const double count = static_cast<double>(n * inner);
  const auto& ker = simd::active();
  Tensor dx(dy.shape());
  for (std::size_t c = 0; c < ch_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * ch_ + c) * inner;
      sum_dy += ker.sum(dy.data() + off, inner);
      sum_dy_xhat += ker.dot(dy.data() + off, xhat_.data() + off, inner);
    }
    gamma_->grad[c] += sum_dy_xhat;
    beta_->grad[c] += sum_dy;
    const double g = gamma_->value[c];
    const double k = g * inv_std_[c];
    // dx = g*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
    const double mean_dy = sum_dy / count, mean_dyx = sum_dy_xhat / count;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * ch_ + c) * inner;
      const double* pdy = dy.data() + off;
      const double* px = xhat_.data() + off;
      double* pdx = dx.data() + off;
      for (std::size_t j = 0; j < inner; ++j) pdx[j] = k * (pdy[j] - mean_dy - px[j] * mean_dyx);
    }
  }
  cached_ = false;
  xhat_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------- GELU

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double Gelu::value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double Gelu::derivative(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Tensor Gelu::forward(const Tensor& x, Mode mode) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = value(x[i]);
  cached_ = mode == Mode::kTrain;
  if (cached_) x_ = x;
  return y;
}

Tensor Gelu::backward(const Tensor& dy) {
  require_cache(cached_, "gelu");
  if (!dy.same_shape(x_)) throw UsageError("gelu backward: gradient shape mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * derivative(x_[i]);
  cached_ = false;
  x_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               bool bias, std::uint64_t seed, LrGroup group)
    : in_(in), out_(out) {
  w_ = &store.add(name + ".weight", kaiming_normal({out, in}, in, derive_seed(seed, name, 0)), true,
                  group);
  if (bias) b_ = &store.add(name + ".bias", Tensor({out}, 0.0), true, group);
}

Tensor Linear::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw UsageError("linear: expected N x " + std::to_string(in_) + ", got " + x.shape_string());
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  if (b_)
    for (std::size_t i = 0; i < n; ++i)
      std::copy(b_->value.data(), b_->value.data() + out_, y.data() + i * out_);
  simd::active().gemm_nt(n, out_, in_, x.data(), in_, w_->value.data(), in_, y.data(), out_);
  cached_ = mode == Mode::kTrain;
  if (cached_) x_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  require_cache(cached_, "linear");
  const std::size_t n = x_.dim(0);
  if (dy.shape() != std::vector<std::size_t>{n, out_})
    throw UsageError("linear backward: gradient shape mismatch");
  const auto& ker = simd::active();
  ker.gemm_tn(out_, in_, n, dy.data(), out_, x_.data(), in_, w_->grad.data(), in_);
  if (b_)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) b_->grad[j] += dy[i * out_ + j];
  Tensor dx({n, in_});
  ker.gemm_nn(n, in_, out_, dy.data(), out_, w_->value.data(), in_, dx.data(), in_);
  cached_ = false;
  x_ = Tensor();
  return dx;
}

// ---------------------------------------------------------------- pooling

Tensor GlobalMaxPool::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(2) * x.dim(3) == 0)
    throw UsageError("global max pool: expected N x C x H x W with H, W >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  std::vector<std::size_t> arg(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* p = x.data() + i * inner;
    std::size_t best = 0;
    for (std::size_t j = 1; j < inner; ++j)
      if (p[j] > p[best]) best = j;
    y[i] = p[best];
    arg[i] = best;
  }
  cached_ = mode == Mode::kTrain;
  if (cached_) {
    in_shape_ = x.shape();
    argmax_ = std::move(arg);
  }
  return y;
}

Tensor GlobalMaxPool::backward(const Tensor& dy) {
  require_cache(cached_, "global max pool");
  const std::size_t n = in_shape_[0], c = in_shape_[1], inner = in_shape_[2] * in_shape_[3];
  if (dy.shape() != std::vector<std::size_t>{n, c})
    throw UsageError("global max pool backward: gradient shape mismatch");
  Tensor dx(in_shape_);
  for (std::size_t i = 0; i < n * c; ++i) dx[i * inner + argmax_[i]] = dy[i];
  cached_ = false;
  return dx;
}

}  // namespace din
