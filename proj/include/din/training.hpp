#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "din/frontend.hpp"
#include "din/gaussian.hpp"
#include "din/losses.hpp"
#include "din/network.hpp"
#include "din/optim.hpp"

namespace din {

/// How the center c evolves between global refreshes.
enum class CenterMode {
  kHybrid,      // global refresh every interval epochs, per-batch means otherwise
  kGlobalOnly,  // global refresh every interval epochs, held constant otherwise
};

struct TrainConfig {
  int epochs_stage1 = 50;
  int epochs_stage2 = 10;
  std::size_t batch_size = 64;
  double lr_stage1 = 1e-4;
  double lr_stage2_head = 1e-3;
  double lr_stage2_backbone = 1e-5;
  AdamParams adam;
  LossWeights weights;
  AngularMarginParams angular;
  ContrastiveParams contrastive;
  int center_refresh_interval = 5;
  CenterMode center_mode = CenterMode::kHybrid;
  std::uint64_t seed = 1;
  std::size_t min_bonafide_per_batch = 8;
  int checkpoint_interval = 5;
  std::size_t inference_batch = 32;
  double shrinkage_factor = 1e-3;
  /// When false the seconds column is written as 0 so logs are reproducible.
  bool log_wall_time = true;

  void validate() const;
};

/// One training segment with its labels.
struct TrainSample {
  Tensor features;  // 3 x F x T, SpecAug not applied
  std::string utt_id;
  int segment_index = 0;
  int class_label = 0;  // stage-1 class: 0 bonafide, 1.. generators
  Group group = Group::kBonafide;

  bool bonafide() const { return group == Group::kBonafide; }
};

struct TrainLogRecord {
  int stage = 1;
  int epoch = 0;  // 0-based
  int step = 0;   // 0-based within the epoch
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
  double l = 0.0;  // combined loss (stage 1) or cross-entropy (stage 2)
  double grad_norm = 0.0;
  double seconds = 0.0;
};

/// `epoch step L1 L2 L3 L grad_norm seconds`, tab-separated.
std::string format_log_record(const TrainLogRecord& r);

/// Epoch-ordered index batches. Every batch holds at least
/// `min_bonafide` bonafide items; bonafide items are oversampled when there
/// are too few to cover every batch. Every index appears at least once.
std::vector<std::vector<std::size_t>> balanced_batches(std::span<const std::uint8_t> bonafide,
                                                       std::size_t batch_size,
                                                       std::size_t min_bonafide, Rng& rng);

enum class CenterAction { kGlobalRefresh, kPerBatch, kHold };

/// Center update rule of a 0-based epoch: a global refresh at the start of
/// every positive epoch divisible by the interval (that is, after 5, 10, ...
/// completed epochs), per-batch updates (hybrid mode) or no updates
/// (global-only mode) in the other epochs. An uninitialized center takes the
/// bonafide mean of the first batch.
CenterAction center_action(int epoch, int interval, CenterMode mode);

/// Row-wise mean; empty result when `rows` is empty.
std::vector<double> mean_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Backbone embeddings (inference mode) of the given samples, N x D.
Tensor embed_samples(DinNetwork& net, std::span<const TrainSample* const> samples,
                     std::size_t batch);

/// Mean inference-mode embedding of every bonafide sample. Leaves `st`
/// unchanged and returns false when there is none.
bool refresh_center(DinNetwork& net, std::span<const TrainSample> data, CenterState& st,
                    int epoch, std::size_t batch);

/// Instrumentation callbacks; all default to no-ops.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_stage_begin(int /*stage*/, const DinNetwork&) {}
  virtual void on_step(const TrainLogRecord&, const DinNetwork&) {}
  /// Center right before and right after the backward pass of a step.
  virtual void on_backward(int /*epoch*/, int /*step*/, std::span<const double> /*before*/,
                           std::span<const double> /*after*/) {}
  virtual void on_center_update(int /*epoch*/, int /*step*/, CenterAction, const CenterState&) {}
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> log;
  /// Called after every checkpoint_interval epochs and at the end of a stage.
  /// `diagnostic` marks the dump written before aborting on a non-finite loss.
  std::function<void(int stage, int epochs_done, const DinNetwork&, const CenterState*,
                     bool diagnostic)>
      checkpoint;
  TrainObserver* observer = nullptr;
};

/// Stage 1: A-Softmax + contrastive + center loss on the stage-1 heads.
/// Resumes at `start_epoch`; returns the final center.
CenterState train_stage1(DinNetwork& net, std::span<const TrainSample> data,
                         const TrainConfig& cfg, const SpecAugParams& aug, CenterState center,
                         int start_epoch = 0, const TrainHooks& hooks = {});

/// Stage 2: two-class cross-entropy on the Entropy head, split learning
/// rates. Swaps the heads first when the stage-1 heads are still attached.
void train_stage2(DinNetwork& net, std::span<const TrainSample> data, const TrainConfig& cfg,
                  const SpecAugParams& aug, int start_epoch = 0, const TrainHooks& hooks = {});

/// Gaussian of the inference-mode embeddings of `bonafide` samples.
BonafideGaussian fit_bonafide_gaussian(DinNetwork& net, std::span<const TrainSample* const> bonafide,
                                       const TrainConfig& cfg,
                                       std::optional<double> epsilon = std::nullopt);

}  // namespace din
