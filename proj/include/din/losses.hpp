#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "din/tensor.hpp"

namespace din {

/// Coarse source family of an utterance.
enum class Group : int { kBonafide = 0, kTts = 1, kVc = 2, kUnknown = 3 };

struct AngularMarginParams {
  int m = 4;
  double s = 30.0;
  void validate() const;
};

struct ContrastiveParams {
  double tau = 0.01;
  /// When false, bonafide rows take no part in the contrastive loss (only
  /// TTS vs VC are contrasted).
  bool include_bonafide = true;
  void validate() const;
};

struct LossWeights {
  double alpha = 0.2;
  double beta = 0.4;
  double gamma = 0.4;
  void validate() const;
};

/// Reference center c of bonafide backbone embeddings. Never receives
/// gradients; only the training loop writes it.
struct CenterState {
  std::vector<double> c;
  bool initialized = false;
  int last_refresh_epoch = -1;
  int refresh_interval = 5;
};

/// Angular margin function (-1)^k cos(m theta) - 2k with k = floor(theta m / pi)
/// clamped to [0, m-1]. Theta outside [0, pi] is clamped and counted.
double phi(double theta, int m);
/// Number of out-of-range angles clamped by phi() since process start.
std::uint64_t phi_clamp_count();

struct AngularLossResult {
  double value = 0.0;
  Tensor grad_y;  // N x d_y
  Tensor grad_w;  // d_y x n_classes
};

/// Mean A-Softmax loss of rows of Y (normalized internally) against class
/// weight columns of W. Throws NumericalError for a zero-norm row.
AngularLossResult a_softmax_loss(const Tensor& y, std::span<const int> labels, const Tensor& w,
                                 const AngularMarginParams& p);

struct ContrastiveResult {
  double value = 0.0;
  Tensor grad_z;
  std::size_t skipped_anchors = 0;  // anchors without any positive
  bool no_negatives = false;        // only one group present
};

/// Contrastive loss over L2-normalized rows of Z. For anchor n with
/// positives c and negatives j:
///   -(1/|P|) sum_c log( e^{s_nc} / (e^{s_nc} + sum_j e^{s_nj}) ),  s = z.z/tau
/// averaged over anchors that have at least one positive.
ContrastiveResult contrastive_loss(const Tensor& z, std::span<const Group> groups,
                                   const ContrastiveParams& p);

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

/// (1/K) sum_k ||x_k - c||^2 over rows flagged in `bonafide_mask`; 0 when K = 0.
LossResult center_loss(const Tensor& x, std::span<const std::uint8_t> bonafide_mask,
                       std::span<const double> center);

double combined_loss(double l1, double l2, double l3, const LossWeights& w);

/// Mean softmax cross-entropy.
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace din
