#include "din/training.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

void TrainConfig::validate() const {
  if (epochs_stage1 < 0 || epochs_stage2 < 0) throw UsageError("train: epochs must be >= 0");
  if (batch_size < 2) throw UsageError("train: batch_size must be >= 2");
  if (!(lr_stage1 >= 0.0) || !(lr_stage2_head >= 0.0) || !(lr_stage2_backbone >= 0.0) ||
      !std::isfinite(lr_stage1 + lr_stage2_head + lr_stage2_backbone))
    throw UsageError("train: learning rates must be finite and >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0))
    throw UsageError("train: invalid Adam parameters");
  weights.validate();
  angular.validate();
  contrastive.validate();
  if (center_refresh_interval < 1) throw UsageError("train: center_refresh_interval must be >= 1");
  if (min_bonafide_per_batch < 1 || min_bonafide_per_batch > batch_size)
    throw UsageError("train: min_bonafide_per_batch must be in [1, batch_size]");
  if (checkpoint_interval < 1) throw UsageError("train: checkpoint_interval must be >= 1");
  if (inference_batch < 1) throw UsageError("train: inference_batch must be >= 1");
  if (!(shrinkage_factor >= 0.0)) throw UsageError("train: shrinkage_factor must be >= 0");
}

std::string format_log_record(const TrainLogRecord& r) {
  using io::format_double;
  return std::to_string(r.epoch) + '\t' + std::to_string(r.step) + '\t' + format_double(r.l1) +
         '\t' + format_double(r.l2) + '\t' + format_double(r.l3) + '\t' + format_double(r.l) +
         '\t' + format_double(r.grad_norm) + '\t' + format_double(r.seconds);
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_upto(rng, i - 1)]);
}

}  // namespace

std::vector<std::vector<std::size_t>> balanced_batches(std::span<const std::uint8_t> bonafide,
                                                       std::size_t batch_size,
                                                       std::size_t min_bonafide, Rng& rng) {
  if (batch_size < 1) throw UsageError("balanced_batches: batch_size must be >= 1");
  if (min_bonafide > batch_size)
    throw UsageError("balanced_batches: min_bonafide exceeds batch_size");
  std::vector<std::size_t> bona, other;
  for (std::size_t i = 0; i < bonafide.size(); ++i) (bonafide[i] ? bona : other).push_back(i);
  if (bona.size() < min_bonafide || bona.empty())
    throw DataError("balanced batches: " + std::to_string(bona.size()) +
                    " bonafide items, need at least " + std::to_string(std::max<std::size_t>(min_bonafide, 1)));
  shuffle(bona, rng);
  shuffle(other, rng);

  std::size_t n_batches = 1, bona_slots = 0;
  for (;; ++n_batches) {
    bona_slots = std::max(bona.size(), n_batches * min_bonafide);
    if (n_batches * batch_size >= bona_slots + other.size()) break;
  }
  while (bona.size() < bona_slots) bona.push_back(bona[uniform_upto(rng, bona.size() - 1)]);

  std::vector<std::vector<std::size_t>> batches(n_batches);
  std::size_t bi = 0, oi = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    auto& batch = batches[b];
    const std::size_t q = bona_slots / n_batches + (b < bona_slots % n_batches ? 1 : 0);
    for (std::size_t k = 0; k < q; ++k) batch.push_back(bona[bi++]);
    while (batch.size() < batch_size && oi < other.size()) batch.push_back(other[oi++]);
    while (batch.size() < batch_size) batch.push_back(uniform_upto(rng, bonafide.size() - 1));
    shuffle(batch, rng);
  }
  return batches;
}

CenterAction center_action(int epoch, int interval, CenterMode mode) {
  if (epoch > 0 && epoch % interval == 0) return CenterAction::kGlobalRefresh;
  return mode == CenterMode::kHybrid ? CenterAction::kPerBatch : CenterAction::kHold;
}

std::vector<double> mean_rows(const Tensor& x, std::span<const std::size_t> rows) {
  if (rows.empty()) return {};
  const std::size_t d = x.dim(1);
  std::vector<double> m(d, 0.0);
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < d; ++j) m[j] += x.at(r, j);
  for (auto& v : m) v /= static_cast<double>(rows.size());
  return m;
}

Tensor embed_samples(DinNetwork& net, std::span<const TrainSample* const> samples,
                     std::size_t batch) {
  const std::size_t d = net.config().embedding_dim();
  Tensor out({samples.size(), d});
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::size_t end = std::min(samples.size(), start + batch);
    std::vector<const Tensor*> items;
    for (std::size_t i = start; i < end; ++i) items.push_back(&samples[i]->features);
    const Tensor x = net.forward_backbone(stack_batch(items), Mode::kInference);
    std::copy_n(x.data(), x.size(), out.data() + start * d);
  }
  return out;
}

bool refresh_center(DinNetwork& net, std::span<const TrainSample> data, CenterState& st,
                    int epoch, std::size_t batch) {
  std::vector<const TrainSample*> bona;
  for (const auto& s : data)
    if (s.bonafide()) bona.push_back(&s);
  if (bona.empty()) {
    std::cerr << "warning: center refresh skipped, no bonafide items\n";
    return false;
  }
  const Tensor x = embed_samples(net, bona, batch);
  std::vector<std::size_t> rows(bona.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  st.c = mean_rows(x, rows);
  st.initialized = true;
  st.last_refresh_epoch = epoch;
  return true;
}

namespace {

constexpr std::uint64_t kStage1Stream = 0x51a6e1;
constexpr std::uint64_t kStage2Stream = 0x51a6e2;

using Clock = std::chrono::steady_clock;

Tensor batch_input(std::span<const TrainSample> data, const std::vector<std::size_t>& idx,
                   const SpecAugParams& aug, std::uint64_t seed, int epoch) {
  std::vector<Tensor> augmented;
  std::vector<const Tensor*> items;
  augmented.reserve(idx.size());
  for (std::size_t i : idx) {
    const TrainSample& s = data[i];
    if (aug.enabled) {
      Rng rng(derive_seed(seed, s.utt_id, static_cast<std::uint64_t>(s.segment_index),
                          static_cast<std::uint64_t>(epoch)));
      augmented.push_back(spec_augment({s.features, s.utt_id, s.segment_index}, aug, rng).data);
      items.push_back(&augmented.back());
    } else {
      items.push_back(&s.features);
    }
  }
  return stack_batch(items);
}

double grad_norm(const ParameterStore& store) {
  double ss = 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    if (!p.trainable) continue;
    for (double g : p.grad.values()) ss += g * g;
  }
  return std::sqrt(ss);
}

std::vector<std::uint8_t> bonafide_mask(std::span<const TrainSample> data) {
  std::vector<std::uint8_t> m(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) m[i] = data[i].bonafide() ? 1 : 0;
  return m;
}

void check_data(std::span<const TrainSample> data) {
  if (data.empty()) throw DataError("training: no training samples");
  for (const auto& s : data)
    if (s.group == Group::kUnknown)
      throw DataError("training: utterance " + s.utt_id + " has no group label");
}

double elapsed(Clock::time_point t0, const TrainConfig& cfg) {
  if (!cfg.log_wall_time) return 0.0;
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void maybe_checkpoint(const TrainHooks& hooks, const TrainConfig& cfg, int stage, int epochs_done,
                      int total, const DinNetwork& net, const CenterState* center) {
  if (!hooks.checkpoint) return;
  if (epochs_done % cfg.checkpoint_interval == 0 || epochs_done == total)
    hooks.checkpoint(stage, epochs_done, net, center, false);
}

[[noreturn]] void abort_non_finite(const TrainHooks& hooks, int stage, int epoch, int step,
                                   const DinNetwork& net, const CenterState* center) {
  if (hooks.checkpoint) hooks.checkpoint(stage, epoch, net, center, true);
  throw NumericalError("non-finite loss in stage " + std::to_string(stage) + " at epoch " +
                       std::to_string(epoch) + " step " + std::to_string(step));
}

}  // namespace

CenterState train_stage1(DinNetwork& net, std::span<const TrainSample> data,
                         const TrainConfig& cfg, const SpecAugParams& aug, CenterState center,
                         int start_epoch, const TrainHooks& hooks) {
  cfg.validate();
  if (net.heads() != HeadSet::kStage1) throw UsageError("stage 1 needs the stage-1 heads");
  check_data(data);
  const std::size_t n_classes = net.config().n_classes_stage1;
  for (const auto& s : data)
    if (s.class_label < 0 || static_cast<std::size_t>(s.class_label) >= n_classes)
      throw DataError("training: class label " + std::to_string(s.class_label) + " of " +
                      s.utt_id + " outside [0, " + std::to_string(n_classes) + ")");
  const std::size_t d = net.config().embedding_dim();
  if (center.c.size() != d) {
    center.c.assign(d, 0.0);
    center.initialized = false;
  }
  center.refresh_interval = cfg.center_refresh_interval;

  TrainObserver* obs = hooks.observer;
  if (obs) obs->on_stage_begin(1, net);
  const auto mask = bonafide_mask(data);
  Adam opt(cfg.adam);
  const auto t0 = Clock::now();
  const LossWeights& w = cfg.weights;

  for (int epoch = start_epoch; epoch < cfg.epochs_stage1; ++epoch) {
    const CenterAction action =
        center_action(epoch, cfg.center_refresh_interval, cfg.center_mode);
    if (action == CenterAction::kGlobalRefresh &&
        refresh_center(net, data, center, epoch, cfg.inference_batch) && obs)
      obs->on_center_update(epoch, -1, action, center);

    Rng rng(derive_seed(cfg.seed, "stage1", kStage1Stream, static_cast<std::uint64_t>(epoch)));
    const auto batches = balanced_batches(mask, cfg.batch_size, cfg.min_bonafide_per_batch, rng);
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& idx = batches[step];
      const Tensor input = batch_input(data, idx, aug, cfg.seed ^ kStage1Stream, epoch);
      std::vector<int> labels;
      std::vector<Group> groups;
      std::vector<std::uint8_t> bmask;
      std::vector<std::size_t> bona_rows;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const TrainSample& s = data[idx[r]];
        labels.push_back(s.class_label);
        groups.push_back(s.group);
        bmask.push_back(s.bonafide() ? 1 : 0);
        if (s.bonafide()) bona_rows.push_back(r);
      }

      const Tensor x = net.forward_backbone(input, Mode::kTrain);
      const Tensor y = net.forward_softmax_head(x, Mode::kTrain);
      const Tensor z = net.forward_contrastive_head(x, Mode::kTrain);
      if (!x.all_finite() || !y.all_finite() || !z.all_finite())
        abort_non_finite(hooks, 1, epoch, static_cast<int>(step), net, &center);
      if (!center.initialized && !bona_rows.empty()) {
        center.c = mean_rows(x, bona_rows);
        center.initialized = true;
        if (obs) obs->on_center_update(epoch, static_cast<int>(step), CenterAction::kPerBatch, center);
      }
      Parameter& wcls = net.asoftmax_weight();
      auto l1 = a_softmax_loss(y, labels, wcls.value, cfg.angular);
      auto l2 = contrastive_loss(z, groups, cfg.contrastive);
      auto l3 = center_loss(x, bmask, center.c);
      const double total = combined_loss(l1.value, l2.value, l3.value, w);
      if (!std::isfinite(total))
        abort_non_finite(hooks, 1, epoch, static_cast<int>(step), net, &center);

      const std::vector<double> c_before = center.c;
      net.zero_grad();
      for (auto& g : l1.grad_y.values()) g *= w.alpha;
      for (auto& g : l2.grad_z.values()) g *= w.beta;
      for (std::size_t k = 0; k < wcls.grad.size(); ++k) wcls.grad[k] += w.alpha * l1.grad_w[k];
      Tensor dx = net.backward_softmax_head(l1.grad_y);
      const Tensor dx2 = net.backward_contrastive_head(l2.grad_z);
      for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += dx2[k] + w.gamma * l3.grad[k];
      net.backward_backbone(dx);
      if (obs) obs->on_backward(epoch, static_cast<int>(step), c_before, center.c);

      const double gn = grad_norm(net.params());
      opt.step(net.params(), cfg.lr_stage1, cfg.lr_stage1);
      net.renormalize_asoftmax();

      if (action == CenterAction::kPerBatch && !bona_rows.empty()) {
        center.c = mean_rows(x, bona_rows);
        if (obs) obs->on_center_update(epoch, static_cast<int>(step), action, center);
      }

      TrainLogRecord rec{1, epoch, static_cast<int>(step), l1.value, l2.value, l3.value,
                         total, gn, elapsed(t0, cfg)};
      if (hooks.log) hooks.log(rec);
      if (obs) obs->on_step(rec, net);
    }
    maybe_checkpoint(hooks, cfg, 1, epoch + 1, cfg.epochs_stage1, net, &center);
  }
  return center;
}

void train_stage2(DinNetwork& net, std::span<const TrainSample> data, const TrainConfig& cfg,
                  const SpecAugParams& aug, int start_epoch, const TrainHooks& hooks) {
  cfg.validate();
  check_data(data);
  if (net.heads() != HeadSet::kEntropy)
    net.swap_to_entropy_head(derive_seed(cfg.seed, "head.entropy", kStage2Stream));
  TrainObserver* obs = hooks.observer;
  if (obs) obs->on_stage_begin(2, net);
  const auto mask = bonafide_mask(data);
  Adam opt(cfg.adam);
  const auto t0 = Clock::now();

  for (int epoch = start_epoch; epoch < cfg.epochs_stage2; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "stage2", kStage2Stream, static_cast<std::uint64_t>(epoch)));
    const auto batches = balanced_batches(mask, cfg.batch_size, cfg.min_bonafide_per_batch, rng);
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& idx = batches[step];
      const Tensor input = batch_input(data, idx, aug, cfg.seed ^ kStage2Stream, epoch);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(data[i].bonafide() ? 0 : 1);

      const Tensor x = net.forward_backbone(input, Mode::kTrain);
      const Tensor logits = net.forward_entropy_head(x, Mode::kTrain);
      if (!logits.all_finite())
        abort_non_finite(hooks, 2, epoch, static_cast<int>(step), net, nullptr);
      const LossResult ce = cross_entropy(logits, labels);
      if (!std::isfinite(ce.value))
        abort_non_finite(hooks, 2, epoch, static_cast<int>(step), net, nullptr);

      net.zero_grad();
      net.backward_backbone(net.backward_entropy_head(ce.grad));
      const double gn = grad_norm(net.params());
      opt.step(net.params(), cfg.lr_stage2_backbone, cfg.lr_stage2_head);

      TrainLogRecord rec{2, epoch, static_cast<int>(step), 0.0, 0.0, 0.0, ce.value, gn,
                         elapsed(t0, cfg)};
      if (hooks.log) hooks.log(rec);
      if (obs) obs->on_step(rec, net);
    }
    maybe_checkpoint(hooks, cfg, 2, epoch + 1, cfg.epochs_stage2, net, nullptr);
  }
}

BonafideGaussian fit_bonafide_gaussian(DinNetwork& net, std::span<const TrainSample* const> bonafide,
                                       const TrainConfig& cfg, std::optional<double> epsilon) {
  if (bonafide.empty()) throw DataError("gaussian fit: no bonafide segments");
  const std::size_t d = net.config().embedding_dim();
  if (bonafide.size() < d + 1)
    std::cerr << "warning: " << bonafide.size() << " bonafide segments for a " << d
              << "-dimensional Gaussian; covariance relies on shrinkage\n";
  const Tensor x = embed_samples(net, bonafide, cfg.inference_batch);
  return fit_gaussian(x, epsilon, cfg.shrinkage_factor);
}

}  // namespace din
