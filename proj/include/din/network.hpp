#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "din/layers.hpp"

namespace din {

/// Architecture hyperparameters of the Depthwise-Inception Network.
struct DinConfig {
  std::size_t in_channels = 3;
  std::size_t stem_channels = 96;
  std::size_t stem_kernel = 4;
  std::size_t stem_stride = 2;
  std::array<std::size_t, 4> block_channels{128, 256, 640, 1024};
  std::array<std::size_t, 4> block_strides{2, 2, 1, 1};
  std::size_t softmax_head_hidden = 128;
  std::size_t n_classes_stage1 = 7;
  std::size_t contrastive_dim = 128;
  std::size_t entropy_classes = 2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  std::size_t embedding_dim() const { return block_channels[3]; }
};

/// Which heads are attached to the backbone.
enum class HeadSet {
  kStage1,   // Softmax head + Contrastive head + A-Softmax class weights
  kEntropy,  // single FC two-class head
};

/// FC -> BN -> GELU.
class DenseUnit {
 public:
  DenseUnit(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
            const DinConfig& cfg, std::uint64_t seed, LrGroup group);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  std::uint64_t flops() const;

 private:
  Linear fc_;
  BatchNorm bn_;
  Gelu act_;
  std::size_t out_;
};

/// Depthwise-Inception residual block. Four branches, each producing
/// out_channels/4 maps at the block stride, concatenated and added to the
/// shortcut:
///   A: 1x1 pointwise
///   B: 3x3 depthwise -> 1x1 pointwise
///   C: 3x1 depthwise (along frequency) -> 1x1 pointwise
///   D: 5x1 depthwise (along frequency) -> 1x1 pointwise
/// Every branch conv is followed by BN + GELU. The shortcut is the identity
/// when shapes match, else a strided 1x1 conv + BN.
class DewIncBlock {
 public:
  DewIncBlock(ParameterStore& store, const std::string& name, std::size_t in_ch,
              std::size_t out_ch, std::size_t stride, const DinConfig& cfg, std::uint64_t seed);
  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dy);
  MapShape out_shape(MapShape in) const;
  std::uint64_t flops(MapShape in) const;
  bool has_projection() const { return proj_ != nullptr; }

 private:
  struct ConvBnAct {
    BatchNorm bn;
    Gelu act;
  };
  struct Branch {
    std::unique_ptr<DepthwiseConv2d> dw;  // absent for branch A
    std::unique_ptr<ConvBnAct> dw_post;
    std::unique_ptr<PointwiseConv2d> pw;
    std::unique_ptr<ConvBnAct> pw_post;
  };
  std::size_t in_ch_, out_ch_, stride_;
  std::vector<Branch> branches_;
  std::unique_ptr<PointwiseConv2d> proj_;
  std::unique_ptr<BatchNorm> proj_bn_;
};

struct ComplexityReport {
  std::uint64_t backbone_params = 0;
  std::uint64_t softmax_head_params = 0;      // FC+BN and A-Softmax class weights
  std::uint64_t contrastive_head_params = 0;
  std::uint64_t entropy_head_params = 0;
  std::uint64_t backbone_flops = 0;
  std::uint64_t entropy_head_flops = 0;

  /// Deployed detector: backbone + Entropy head.
  std::uint64_t inference_params() const { return backbone_params + entropy_head_params; }
  std::uint64_t inference_flops() const { return backbone_flops + entropy_head_flops; }
  std::uint64_t stage1_params() const {
    return backbone_params + softmax_head_params + contrastive_head_params;
  }
};

/// Backbone (stem, four Dew-Inc blocks, global max pooling) plus heads.
/// Layers keep the activations of the last training-mode forward for
/// backward; inference-mode forwards keep nothing.
class DinNetwork {
 public:
  DinNetwork(const DinConfig& cfg, HeadSet heads, std::uint64_t seed);
  DinNetwork(const DinNetwork&) = delete;
  DinNetwork& operator=(const DinNetwork&) = delete;

  const DinConfig& config() const { return cfg_; }
  HeadSet heads() const { return heads_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  Tensor forward_stem(const Tensor& x, Mode mode);
  Tensor forward_block(std::size_t index, const Tensor& x, Mode mode);
  Tensor forward_pool(const Tensor& x, Mode mode);
  /// N x in_channels x F x T -> N x D embeddings X.
  Tensor forward_backbone(const Tensor& x, Mode mode);
  void backward_backbone(const Tensor& dx);

  /// X -> Y (N x softmax_head_hidden).
  Tensor forward_softmax_head(const Tensor& x, Mode mode);
  Tensor backward_softmax_head(const Tensor& dy);
  /// X -> Z (N x contrastive_dim).
  Tensor forward_contrastive_head(const Tensor& x, Mode mode);
  Tensor backward_contrastive_head(const Tensor& dz);
  /// X -> logits (N x entropy_classes); softmax lives in the loss.
  Tensor forward_entropy_head(const Tensor& x, Mode mode);
  Tensor backward_entropy_head(const Tensor& dlogits);

  /// A-Softmax class weights, softmax_head_hidden x n_classes_stage1.
  Parameter& asoftmax_weight();
  /// Rescales every class-weight column to unit L2 norm.
  void renormalize_asoftmax();

  /// Drops the stage-1 heads and attaches a freshly initialized Entropy head.
  void swap_to_entropy_head(std::uint64_t seed);

  void zero_grad() { store_.zero_grad(); }
  /// Per-layer accounting for an input of in_channels x height x width.
  ComplexityReport complexity(std::size_t height, std::size_t width) const;

 private:
  void build_stage1_heads(std::uint64_t seed);
  void build_entropy_head(std::uint64_t seed);
  static void check_rank2(const Tensor& x, std::size_t cols, const char* who);

  DinConfig cfg_;
  HeadSet heads_;
  ParameterStore store_;

  std::unique_ptr<Conv2d> stem_conv_;
  std::unique_ptr<BatchNorm> stem_bn_;
  Gelu stem_act_;
  std::vector<std::unique_ptr<DewIncBlock>> blocks_;
  GlobalMaxPool pool_;

  std::unique_ptr<DenseUnit> softmax_fc_;
  std::unique_ptr<DenseUnit> contrastive_fc1_;
  std::unique_ptr<DenseUnit> contrastive_fc2_;
  Parameter* asoftmax_w_ = nullptr;
  std::unique_ptr<Linear> entropy_fc_;
};

/// Trainable parameters of the deployed model (backbone + Entropy head).
std::uint64_t count_parameters(const DinConfig& cfg);
/// FLOPs of one forward pass of the deployed model on in_channels x h x w.
std::uint64_t count_flops(const DinConfig& cfg, std::size_t height, std::size_t width);
ComplexityReport count_complexity(const DinConfig& cfg, std::size_t height, std::size_t width);

/// Stacks tensors of identical shape C x F x T into an N x C x F x T batch.
Tensor stack_batch(const std::vector<const Tensor*>& items);

}  // namespace din
