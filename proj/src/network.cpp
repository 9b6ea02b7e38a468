#include "din/network.hpp"

#include <algorithm>
#include <cmath>

#include "din/error.hpp"

namespace din {

void DinConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw UsageError(std::string("model: ") + what + " must be > 0");
  };
  positive(in_channels, "in_channels");
  positive(stem_channels, "stem_channels");
  positive(stem_kernel, "stem_kernel");
  positive(stem_stride, "stem_stride");
  for (std::size_t i = 0; i < 4; ++i) {
    positive(block_channels[i], "block_channels");
    positive(block_strides[i], "block_strides");
    if (block_channels[i] % 4 != 0)
      throw UsageError("model: block_channels[" + std::to_string(i) +
                       "] must be divisible by 4 (one quarter per inception branch)");
  }
  positive(softmax_head_hidden, "softmax_head_hidden");
  positive(contrastive_dim, "contrastive_dim");
  if (n_classes_stage1 < 2) throw UsageError("model: n_classes_stage1 must be >= 2");
  if (entropy_classes < 2) throw UsageError("model: entropy_classes must be >= 2");
  if (!(bn_eps > 0.0)) throw UsageError("model: bn_eps must be > 0");
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0))
    throw UsageError("model: bn_momentum must be in (0, 1]");
}

namespace {

Tensor slice_channels(const Tensor& x, std::size_t c0, std::size_t count) {
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor out({n, count, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.data() + (i * c + c0) * inner, count * inner, out.data() + i * count * inner);
  return out;
}

void put_channels(const Tensor& src, std::size_t c0, Tensor& dst) {
  const std::size_t n = dst.dim(0), c = dst.dim(1), inner = dst.dim(2) * dst.dim(3);
  const std::size_t count = src.dim(1);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(src.data() + i * count * inner, count * inner, dst.data() + (i * c + c0) * inner);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------- DenseUnit

DenseUnit::DenseUnit(ParameterStore& store, const std::string& name, std::size_t in,
                     std::size_t out, const DinConfig& cfg, std::uint64_t seed, LrGroup group)
    : fc_(store, name + ".fc", in, out, true, seed, group),
      bn_(store, name + ".bn", out, cfg.bn_eps, cfg.bn_momentum, group),
      out_(out) {}

Tensor DenseUnit::forward(const Tensor& x, Mode mode) {
  return act_.forward(bn_.forward(fc_.forward(x, mode), mode), mode);
}

Tensor DenseUnit::backward(const Tensor& dy) {
  return fc_.backward(bn_.backward(act_.backward(dy)));
}

std::uint64_t DenseUnit::flops() const {
  const MapShape s{out_, 1, 1};
  return fc_.flops() + bn_.flops(s) + act_.flops(s);
}

// ---------------------------------------------------------------- block

DewIncBlock::DewIncBlock(ParameterStore& store, const std::string& name, std::size_t in_ch,
                         std::size_t out_ch, std::size_t stride, const DinConfig& cfg,
                         std::uint64_t seed)
    : in_ch_(in_ch), out_ch_(out_ch), stride_(stride) {
  if (out_ch % 4 != 0) throw UsageError("dew-inc block: out_channels not divisible by 4");
  const std::size_t quarter = out_ch / 4;
  const std::array<std::pair<std::size_t, std::size_t>, 4> kernels{{{0, 0}, {3, 3}, {3, 1}, {5, 1}}};
  const char* tags[4] = {"a", "b", "c", "d"};
  auto post = [&](const std::string& n, std::size_t ch) {
    return std::make_unique<ConvBnAct>(
        ConvBnAct{BatchNorm(store, n, ch, cfg.bn_eps, cfg.bn_momentum, LrGroup::kBackbone), Gelu{}});
  };
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string base = name + "." + tags[b];
    Branch br;
    if (b == 0) {
      br.pw = std::make_unique<PointwiseConv2d>(store, base + ".pw", in_ch, quarter, stride, seed,
                                                LrGroup::kBackbone);
    } else {
      br.dw = std::make_unique<DepthwiseConv2d>(store, base + ".dw", in_ch, kernels[b].first,
                                                kernels[b].second, stride, seed, LrGroup::kBackbone);
      br.dw_post = post(base + ".dw_bn", in_ch);
      br.pw = std::make_unique<PointwiseConv2d>(store, base + ".pw", in_ch, quarter, 1, seed,
                                                LrGroup::kBackbone);
    }
    br.pw_post = post(base + ".pw_bn", quarter);
    branches_.push_back(std::move(br));
  }
  if (in_ch != out_ch || stride != 1) {
    proj_ = std::make_unique<PointwiseConv2d>(store, name + ".proj", in_ch, out_ch, stride, seed,
                                              LrGroup::kBackbone);
    proj_bn_ = std::make_unique<BatchNorm>(store, name + ".proj_bn", out_ch, cfg.bn_eps,
                                           cfg.bn_momentum, LrGroup::kBackbone);
  }
}

MapShape DewIncBlock::out_shape(MapShape in) const {
  return {out_ch_, conv_out_size(in.h, 1, stride_, 0), conv_out_size(in.w, 1, stride_, 0)};
}

std::uint64_t DewIncBlock::flops(MapShape in) const {
  std::uint64_t f = 0;
  for (const auto& br : branches_) {
    MapShape s = in;
    if (br.dw) {
      f += br.dw->flops(s);
      s = br.dw->out_shape(s);
      f += br.dw_post->bn.flops(s) + br.dw_post->act.flops(s);
    }
    f += br.pw->flops(s);
    s = br.pw->out_shape(s);
    f += br.pw_post->bn.flops(s) + br.pw_post->act.flops(s);
  }
  const MapShape out = out_shape(in);
  if (proj_) f += proj_->flops(in) + proj_bn_->flops(out);
  return f + out.elements();  // residual add
}

Tensor DewIncBlock::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != in_ch_)
    throw UsageError("dew-inc block: expected " + std::to_string(in_ch_) + " input channels, got " +
                     x.shape_string());
  const MapShape o = out_shape({in_ch_, x.dim(2), x.dim(3)});
  Tensor y({x.dim(0), out_ch_, o.h, o.w});
  const std::size_t quarter = out_ch_ / 4;
  for (std::size_t b = 0; b < 4; ++b) {
    auto& br = branches_[b];
    Tensor t;
    if (br.dw) {
      t = br.dw->forward(x, mode);
      t = br.dw_post->act.forward(br.dw_post->bn.forward(t, mode), mode);
      t = br.pw->forward(t, mode);
    } else {
      t = br.pw->forward(x, mode);
    }
    t = br.pw_post->act.forward(br.pw_post->bn.forward(t, mode), mode);
    if (t.dim(2) != o.h || t.dim(3) != o.w)
      throw UsageError("dew-inc block: branch output " + t.shape_string() + " misaligned");
    put_channels(t, b * quarter, y);
  }
  if (proj_) {
    add_into(y, proj_bn_->forward(proj_->forward(x, mode), mode));
  } else {
    add_into(y, x);
  }
  return y;
}

Tensor DewIncBlock::backward(const Tensor& dy) {
  const std::size_t quarter = out_ch_ / 4;
  Tensor dx = proj_ ? proj_->backward(proj_bn_->backward(dy)) : dy;
  for (std::size_t b = 0; b < 4; ++b) {
    auto& br = branches_[b];
    Tensor g = slice_channels(dy, b * quarter, quarter);
    g = br.pw_post->bn.backward(br.pw_post->act.backward(g));
    g = br.pw->backward(g);
    if (br.dw) {
      g = br.dw_post->bn.backward(br.dw_post->act.backward(g));
      g = br.dw->backward(g);
    }
    add_into(dx, g);
  }
  return dx;
}

// ---------------------------------------------------------------- network

DinNetwork::DinNetwork(const DinConfig& cfg, HeadSet heads, std::uint64_t seed)
    : cfg_(cfg), heads_(heads) {
  cfg_.validate();
  // "Same" padding: for the 4x4/stride-2 stem this is 1, halving F and T.
  const std::size_t pad = (cfg.stem_kernel - 1) / 2;
  stem_conv_ = std::make_unique<Conv2d>(store_, "stem.conv", cfg.in_channels, cfg.stem_channels,
                                        cfg.stem_kernel, cfg.stem_kernel, cfg.stem_stride, pad,
                                        pad, seed, LrGroup::kBackbone);
  stem_bn_ = std::make_unique<BatchNorm>(store_, "stem.bn", cfg.stem_channels, cfg.bn_eps,
                                         cfg.bn_momentum, LrGroup::kBackbone);
  std::size_t ch = cfg.stem_channels;
  for (std::size_t i = 0; i < 4; ++i) {
    blocks_.push_back(std::make_unique<DewIncBlock>(store_, "block" + std::to_string(i + 1), ch,
                                                    cfg.block_channels[i], cfg.block_strides[i],
                                                    cfg, seed));
    ch = cfg.block_channels[i];
  }
  if (heads == HeadSet::kStage1)
    build_stage1_heads(seed);
  else
    build_entropy_head(seed);
}

void DinNetwork::build_stage1_heads(std::uint64_t seed) {
  const std::size_t d = cfg_.embedding_dim();
  softmax_fc_ = std::make_unique<DenseUnit>(store_, "head.softmax", d, cfg_.softmax_head_hidden,
                                            cfg_, seed, LrGroup::kHead);
  contrastive_fc1_ = std::make_unique<DenseUnit>(store_, "head.contrastive.l1", d,
                                                 cfg_.contrastive_dim, cfg_, seed, LrGroup::kHead);
  contrastive_fc2_ = std::make_unique<DenseUnit>(store_, "head.contrastive.l2", cfg_.contrastive_dim,
                                                 cfg_.contrastive_dim, cfg_, seed, LrGroup::kHead);
  asoftmax_w_ = &store_.add("head.asoftmax.weight",
                            kaiming_normal({cfg_.softmax_head_hidden, cfg_.n_classes_stage1},
                                           cfg_.softmax_head_hidden,
                                           derive_seed(seed, "head.asoftmax.weight", 0)),
                            true, LrGroup::kHead);
  renormalize_asoftmax();
}

void DinNetwork::build_entropy_head(std::uint64_t seed) {
  entropy_fc_ = std::make_unique<Linear>(store_, "head.entropy.fc", cfg_.embedding_dim(),
                                         cfg_.entropy_classes, true, seed, LrGroup::kHead);
}

void DinNetwork::swap_to_entropy_head(std::uint64_t seed) {
  softmax_fc_.reset();
  contrastive_fc1_.reset();
  contrastive_fc2_.reset();
  asoftmax_w_ = nullptr;
  store_.remove_prefix("head.softmax.");
  store_.remove_prefix("head.contrastive.");
  store_.remove_prefix("head.asoftmax.");
  if (!entropy_fc_) build_entropy_head(seed);
  heads_ = HeadSet::kEntropy;
}

Parameter& DinNetwork::asoftmax_weight() {
  if (!asoftmax_w_) throw UsageError("network has no A-Softmax class weights (stage-1 heads absent)");
  return *asoftmax_w_;
}

void DinNetwork::renormalize_asoftmax() {
  auto& w = asoftmax_weight().value;
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  for (std::size_t j = 0; j < cols; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < rows; ++i) ss += w.at(i, j) * w.at(i, j);
    const double norm = std::sqrt(ss);
    if (norm <= 0.0) throw NumericalError("A-Softmax class weight column has zero norm");
    for (std::size_t i = 0; i < rows; ++i) w.at(i, j) /= norm;
  }
}

Tensor DinNetwork::forward_stem(const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != cfg_.in_channels)
    throw UsageError("stem: expected N x " + std::to_string(cfg_.in_channels) +
                     " x F x T input, got " + x.shape_string());
  return stem_act_.forward(stem_bn_->forward(stem_conv_->forward(x, mode), mode), mode);
}

Tensor DinNetwork::forward_block(std::size_t index, const Tensor& x, Mode mode) {
  return blocks_.at(index)->forward(x, mode);
}

Tensor DinNetwork::forward_pool(const Tensor& x, Mode mode) { return pool_.forward(x, mode); }

Tensor DinNetwork::forward_backbone(const Tensor& x, Mode mode) {
  Tensor h = forward_stem(x, mode);
  for (std::size_t i = 0; i < blocks_.size(); ++i) h = forward_block(i, h, mode);
  Tensor out = forward_pool(h, mode);
  if (out.dim(1) != cfg_.embedding_dim()) throw UsageError("backbone: embedding width mismatch");
  return out;
}

void DinNetwork::backward_backbone(const Tensor& dx) {
  Tensor g = pool_.backward(dx);
  for (std::size_t i = blocks_.size(); i-- > 0;) g = blocks_[i]->backward(g);
  stem_conv_->backward(stem_bn_->backward(stem_act_.backward(g)));
}

void DinNetwork::check_rank2(const Tensor& x, std::size_t cols, const char* who) {
  if (x.rank() != 2 || x.dim(1) != cols)
    throw UsageError(std::string(who) + ": expected N x " + std::to_string(cols) + ", got " +
                     x.shape_string());
}

Tensor DinNetwork::forward_softmax_head(const Tensor& x, Mode mode) {
  if (!softmax_fc_) throw UsageError("softmax head not attached");
  check_rank2(x, cfg_.embedding_dim(), "softmax head");
  return softmax_fc_->forward(x, mode);
}

Tensor DinNetwork::backward_softmax_head(const Tensor& dy) {
  if (!softmax_fc_) throw UsageError("softmax head not attached");
  return softmax_fc_->backward(dy);
}

Tensor DinNetwork::forward_contrastive_head(const Tensor& x, Mode mode) {
  if (!contrastive_fc1_) throw UsageError("contrastive head not attached");
  check_rank2(x, cfg_.embedding_dim(), "contrastive head");
  return contrastive_fc2_->forward(contrastive_fc1_->forward(x, mode), mode);
}

Tensor DinNetwork::backward_contrastive_head(const Tensor& dz) {
  if (!contrastive_fc1_) throw UsageError("contrastive head not attached");
  return contrastive_fc1_->backward(contrastive_fc2_->backward(dz));
}

Tensor DinNetwork::forward_entropy_head(const Tensor& x, Mode mode) {
  if (!entropy_fc_) throw UsageError("entropy head not attached");
  check_rank2(x, cfg_.embedding_dim(), "entropy head");
  return entropy_fc_->forward(x, mode);
}

Tensor DinNetwork::backward_entropy_head(const Tensor& dlogits) {
  if (!entropy_fc_) throw UsageError("entropy head not attached");
  return entropy_fc_->backward(dlogits);
}

ComplexityReport DinNetwork::complexity(std::size_t height, std::size_t width) const {
  ComplexityReport r;
  for (std::size_t i = 0; i < store_.size(); ++i) {
    const auto& p = store_[i];
    if (!p.trainable) continue;
    const std::uint64_t n = p.value.size();
    if (p.name.starts_with("head.softmax.") || p.name.starts_with("head.asoftmax."))
      r.softmax_head_params += n;
    else if (p.name.starts_with("head.contrastive."))
      r.contrastive_head_params += n;
    else if (p.name.starts_with("head.entropy."))
      r.entropy_head_params += n;
    else
      r.backbone_params += n;
  }
  MapShape s{cfg_.in_channels, height, width};
  r.backbone_flops += stem_conv_->flops(s);
  s = stem_conv_->out_shape(s);
  r.backbone_flops += stem_bn_->flops(s) + stem_act_.flops(s);
  for (const auto& b : blocks_) {
    r.backbone_flops += b->flops(s);
    s = b->out_shape(s);
  }
  r.backbone_flops += pool_.flops(s);
  if (entropy_fc_) r.entropy_head_flops = entropy_fc_->flops();
  return r;
}

ComplexityReport count_complexity(const DinConfig& cfg, std::size_t height, std::size_t width) {
  DinNetwork net(cfg, HeadSet::kStage1, 0);
  ComplexityReport r = net.complexity(height, width);
  net.swap_to_entropy_head(0);
  const ComplexityReport e = net.complexity(height, width);
  r.entropy_head_params = e.entropy_head_params;
  r.entropy_head_flops = e.entropy_head_flops;
  return r;
}

std::uint64_t count_parameters(const DinConfig& cfg) {
  return count_complexity(cfg, 128, 128).inference_params();
}

std::uint64_t count_flops(const DinConfig& cfg, std::size_t height, std::size_t width) {
  return count_complexity(cfg, height, width).inference_flops();
}

Tensor stack_batch(const std::vector<const Tensor*>& items) {
  if (items.empty()) throw UsageError("stack_batch: empty batch");
  const auto& shape = items.front()->shape();
  std::vector<std::size_t> out_shape{items.size()};
  out_shape.insert(out_shape.end(), shape.begin(), shape.end());
  Tensor out(out_shape);
  const std::size_t per = items.front()->size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i]->shape() != shape) throw UsageError("stack_batch: items differ in shape");
    std::copy_n(items[i]->data(), per, out.data() + i * per);
  }
  return out;
}

}  // namespace din
