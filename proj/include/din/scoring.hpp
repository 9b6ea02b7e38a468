#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "din/frontend.hpp"
#include "din/gaussian.hpp"
#include "din/network.hpp"

namespace din {

enum class Label { kBonafide, kFake };

struct ScoreRecord {
  std::string utt_id;
  double distance = 0.0;
  int n_segments = 1;
  std::optional<Label> label;
  std::optional<std::string> generator_id;
};

enum class Aggregation { kMean, kMax };

/// sqrt((x - mean)^T precision (x - mean)).
double mahalanobis(std::span<const double> x, const BonafideGaussian& g);

/// Distance of each segment of one utterance, then mean (or max).
ScoreRecord score_segments(const std::string& utt_id, std::span<const SpectrogramTensor> segments,
                           DinNetwork& net, const BonafideGaussian& g,
                           Aggregation agg = Aggregation::kMean);

/// Alternative score: stage-2 softmax probability of the fake class (logit
/// index 1), aggregated over segments like the distance.
ScoreRecord score_segments_softmax(const std::string& utt_id,
                                   std::span<const SpectrogramTensor> segments, DinNetwork& net,
                                   Aggregation agg = Aggregation::kMean);

ScoreRecord score_utterance(const AudioClip& clip, DinNetwork& net, const BonafideGaussian& g,
                            const FrontendConfig& cfg, Aggregation agg = Aggregation::kMean);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Larger distance means more likely fake. FAR(t) is the fraction of fake
/// records with d <= t, FRR(t) the fraction of bonafide records with d > t.
/// Thresholds are swept over score midpoints; the crossing is linearly
/// interpolated between the two straddling thresholds.
EerResult compute_eer(std::span<const ScoreRecord> records);

/// Probability that a random bonafide record has a smaller distance than a
/// random fake one, ties counted one half.
double compute_auc(std::span<const ScoreRecord> records);

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Predicts fake iff d > threshold; counts with respect to `positive`.
Confusion confusion_at(std::span<const ScoreRecord> records, double threshold,
                       Label positive = Label::kFake);

struct AccF1 {
  double accuracy = 0.0;
  double f1 = 0.0;
};
AccF1 accuracy_f1(std::span<const ScoreRecord> records, double threshold,
                  Label positive = Label::kFake);

/// EER crossing threshold of a labeled development set.
double calibrate_threshold(std::span<const ScoreRecord> dev);

struct EvalReport {
  double eer = 0.0;
  double eer_threshold = 0.0;
  double auc = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double threshold_used = 0.0;
  std::size_t n_bonafide = 0;
  std::size_t n_fake = 0;
  Label positive = Label::kFake;
};

/// Without a threshold the eval set's own EER threshold is used.
EvalReport evaluate(std::span<const ScoreRecord> records, std::optional<double> threshold,
                    Label positive = Label::kFake);
std::string report_text(const EvalReport& r);
std::string report_json(const EvalReport& r);

std::string label_name(Label l);
Label parse_label(std::string_view s);

/// Tab-separated `utt_id distance n_segments [label] [generator_id]`, sorted
/// by utt_id.
std::string format_scores(std::vector<ScoreRecord> records);
std::vector<ScoreRecord> parse_scores(std::string_view text);
void write_scores(const std::filesystem::path& path, std::vector<ScoreRecord> records);
std::vector<ScoreRecord> read_scores(const std::filesystem::path& path);

}  // namespace din
