#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "din/audio.hpp"
#include "din/rng.hpp"
#include "din/tensor.hpp"

namespace din {

/// Random time/frequency masking. Mask widths are drawn uniformly in
/// [0, max] and start positions uniformly over the valid range.
struct SpecAugParams {
  int n_freq_masks = 2;
  int max_freq_mask = 16;
  int n_time_masks = 2;
  int max_time_mask = 20;
  bool enabled = true;
};

struct FrontendConfig {
  int sample_rate_hz = 16000;
  double segment_seconds = 4.0;
  int window_size = 1024;
  int hop_size = 512;
  int n_filters = 128;
  int target_frames = 128;
  double log_floor = 1e-10;
  int delta_width = 9;
  SpecAugParams specaug;

  /// Throws UsageError on any violated invariant.
  void validate() const;
  std::size_t segment_samples() const;
  std::size_t n_bins() const { return static_cast<std::size_t>(window_size) / 2 + 1; }
};

/// Triangular filters on linearly spaced band edges between 0 and sr/2.
struct FilterBank {
  Tensor weights;                   // n_filters x n_bins
  std::vector<double> band_edges;   // n_filters + 2, Hz
};

/// 3 x F x T stack: log filterbank energy, delta, delta-delta.
struct SpectrogramTensor {
  Tensor data;
  std::string source_utt;
  int segment_index = 0;
};

/// Splits a clip into consecutive fixed-length windows. A trailing partial
/// window is tiled to full length when it covers at least a quarter of a
/// segment and dropped otherwise; a clip shorter than one segment is always
/// tiled.
std::vector<std::vector<double>> segment_audio(const AudioClip& clip, const FrontendConfig& cfg);

/// Power spectrogram, (window_size/2+1) x target_frames. Frames are
/// Hann-windowed and centered via reflection padding; the frame count is
/// trimmed or edge-padded to target_frames.
Tensor stft_power(std::span<const double> window, const FrontendConfig& cfg);

FilterBank build_linear_filterbank(const FrontendConfig& cfg, int sample_rate_hz);

/// ln(weights * power + log_floor), n_filters x n_frames.
Tensor apply_filterbank_log(const Tensor& power, const FilterBank& fb, double log_floor);

/// Regression delta along the time (column) axis with edge replication.
Tensor compute_delta(const Tensor& m, int width);

/// Masks bands of the spectrogram with the per-channel mean of the input,
/// identically across channels. Draw order: for each frequency mask width
/// then start, then the same for each time mask.
SpectrogramTensor spec_augment(const SpectrogramTensor& t, const SpecAugParams& p, Rng& rng);

/// Whole front end: segment, STFT, filterbank + log, deltas, stack, and
/// SpecAug when `training`. Segment i draws its masks from a private stream
/// seeded by (augment_seed, utt_id, i).
std::vector<SpectrogramTensor> extract_features(const AudioClip& clip, const FrontendConfig& cfg,
                                                bool training, std::uint64_t augment_seed = 0);

/// Frontend on one already-segmented window (no SpecAug).
SpectrogramTensor features_for_window(std::span<const double> window, const FrontendConfig& cfg,
                                      const FilterBank& fb);

}  // namespace din
