#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "din/rng.hpp"
#include "din/tensor.hpp"

namespace din {

enum class Mode { kTrain, kInference };

/// Learning-rate group; stage 2 fine-tunes heads and backbone at different rates.
enum class LrGroup { kBackbone, kHead };

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value; empty for non-trainable tensors
  bool trainable = true;
  LrGroup group = LrGroup::kBackbone;
};

/// Named tensors of a network, in insertion order. Addresses of Parameter
/// objects stay valid until the parameter is removed.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool trainable, LrGroup group);
  bool contains(std::string_view name) const;
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  /// Removes every parameter whose name starts with `prefix`; returns the count.
  std::size_t remove_prefix(std::string_view prefix);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t trainable_count() const;
  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// Per-parameter gradient tensors aligned with ParameterStore names.
struct GradientTape {
  std::vector<std::string> names;
  std::vector<Tensor> grads;

  static GradientTape collect(const ParameterStore& store);
  const Tensor& get(std::string_view name) const;
  double l2_norm() const;
};

/// Shape-only description used for FLOP accounting: C x H x W per sample.
struct MapShape {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t elements() const { return c * h * w; }
};

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Dense 2-D convolution without bias (always followed by batch norm).
class Conv2d {
 public:
  Conv2d(ParameterStore& store, const std::string& name, std::size_t in_ch, std::size_t out_ch,
         std::size_t kernel_h, std::size_t kernel_w, std::size_t stride, std::size_t pad_h,
         std::size_t pad_w, std::uint64_t seed, LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  MapShape out_shape(MapShape in) const;
  std::uint64_t flops(MapShape in) const;
  Parameter& weight() { return *w_; }

 private:
  void im2col(const double* img, std::size_t h, std::size_t w, double* cols) const;
  void col2im(const double* cols, std::size_t h, std::size_t w, double* img) const;
  Parameter* w_;
  std::size_t in_ch_, out_ch_, kh_, kw_, stride_, ph_, pw_;
  Tensor x_;
  bool cached_ = false;
};

/// Per-channel convolution (one kh x kw filter per channel), no bias.
class DepthwiseConv2d {
 public:
  DepthwiseConv2d(ParameterStore& store, const std::string& name, std::size_t channels,
                  std::size_t kernel_h, std::size_t kernel_w, std::size_t stride, std::uint64_t seed,
                  LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  MapShape out_shape(MapShape in) const;
  std::uint64_t flops(MapShape in) const;
  Parameter& weight() { return *w_; }

 private:
  Parameter* w_;
  std::size_t ch_, kh_, kw_, stride_, ph_, pw_;
  Tensor x_;
  bool cached_ = false;
};

/// 1x1 convolution with optional stride (input subsampling), no bias.
class PointwiseConv2d {
 public:
  PointwiseConv2d(ParameterStore& store, const std::string& name, std::size_t in_ch,
                  std::size_t out_ch, std::size_t stride, std::uint64_t seed, LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  MapShape out_shape(MapShape in) const;
  std::uint64_t flops(MapShape in) const;
  Parameter& weight() { return *w_; }

 private:
  Parameter* w_;
  std::size_t in_ch_, out_ch_, stride_;
  Tensor xs_;  // subsampled input
  std::vector<std::size_t> in_shape_;
  bool cached_ = false;
};

/// Batch normalization over N (and H, W for 4-D input) per channel.
/// Training mode normalizes with batch statistics and updates running stats.
class BatchNorm {
 public:
  BatchNorm(ParameterStore& store, const std::string& name, std::size_t channels, double eps,
            double momentum, LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  std::uint64_t flops(MapShape in) const { return 2 * in.elements(); }
  Parameter& gamma() { return *gamma_; }
  Parameter& beta() { return *beta_; }
  Parameter& running_mean() { return *mean_; }
  Parameter& running_var() { return *var_; }

 private:
  Parameter *gamma_, *beta_, *mean_, *var_;
  std::size_t ch_;
  double eps_, momentum_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  bool cached_ = false;
};

/// GELU, tanh approximation.
class Gelu {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  std::uint64_t flops(MapShape in) const { return 2 * in.elements(); }

  static double value(double x);
  static double derivative(double x);

 private:
  Tensor x_;
  bool cached_ = false;
};

/// y = x W^T + b for x of shape N x in.
class Linear {
 public:
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         bool bias, std::uint64_t seed, LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  std::uint64_t flops() const { return 2 * in_ * out_ + (b_ ? out_ : 0); }
  Parameter& weight() { return *w_; }
  Parameter* bias() { return b_; }

 private:
  Parameter* w_;
  Parameter* b_ = nullptr;
  std::size_t in_, out_;
  Tensor x_;
  bool cached_ = false;
};

/// Per-channel maximum over all spatial positions: N x C x H x W -> N x C.
class GlobalMaxPool {
 public:
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  std::uint64_t flops(MapShape in) const { return in.elements(); }

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

/// Kaiming fan-in normal initialization.
Tensor kaiming_normal(std::vector<std::size_t> shape, std::size_t fan_in, std::uint64_t seed);

}  // namespace din
