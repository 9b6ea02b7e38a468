#include "din/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "din/error.hpp"
#include "din/fft.hpp"
#include "din/simd.hpp"

namespace din {

void FrontendConfig::validate() const {
  if (sample_rate_hz <= 0) throw UsageError("frontend: sample_rate_hz must be > 0");
  if (!(segment_seconds > 0.0)) throw UsageError("frontend: segment_seconds must be > 0");
  if (window_size < 2 || (window_size & (window_size - 1)) != 0)
    throw UsageError("frontend: window_size must be a power of two");
  if (hop_size < 1 || hop_size > window_size)
    throw UsageError("frontend: hop_size must be in [1, window_size]");
  if (n_filters < 2) throw UsageError("frontend: n_filters must be >= 2");
  if (target_frames < 1) throw UsageError("frontend: target_frames must be >= 1");
  if (!(log_floor > 0.0)) throw UsageError("frontend: log_floor must be > 0");
  if (delta_width < 3 || delta_width % 2 == 0)
    throw UsageError("frontend: delta_width must be odd and >= 3");
  const auto& a = specaug;
  if (a.n_freq_masks < 0 || a.n_time_masks < 0 || a.max_freq_mask < 0 || a.max_time_mask < 0 ||
      a.max_freq_mask > n_filters || a.max_time_mask > target_frames)
    throw UsageError("frontend: specaug mask widths must lie in [0, axis length]");
  if (segment_samples() < static_cast<std::size_t>(window_size))
    throw UsageError("frontend: segment shorter than one analysis window");
}

std::size_t FrontendConfig::segment_samples() const {
  return static_cast<std::size_t>(std::llround(segment_seconds * sample_rate_hz));
}

namespace {

std::vector<double> tile(std::span<const double> src, std::size_t len) {
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = src[i % src.size()];
  return out;
}

}  // namespace

std::vector<std::vector<double>> segment_audio(const AudioClip& clip, const FrontendConfig& cfg) {
  if (clip.samples.empty()) throw DataError("empty audio");
  const std::size_t seg = cfg.segment_samples();
  const std::span<const double> all(clip.samples);
  std::vector<std::vector<double>> out;
  if (all.size() < seg) {
    out.push_back(tile(all, seg));
    return out;
  }
  const std::size_t n_full = all.size() / seg;
  for (std::size_t i = 0; i < n_full; ++i)
    out.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(i * seg),
                     all.begin() + static_cast<std::ptrdiff_t>((i + 1) * seg));
  const std::size_t rem = all.size() - n_full * seg;
  if (rem > 0 && rem * 4 >= seg) out.push_back(tile(all.subspan(n_full * seg), seg));
  return out;
}

Tensor stft_power(std::span<const double> window, const FrontendConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.window_size);
  const auto hop = static_cast<std::size_t>(cfg.hop_size);
  const std::size_t len = window.size();
  if (len < n) throw DataError("stft: input shorter than window_size");

  const std::size_t half = n / 2;
  // Reflection padding without repeating the edge sample.
  auto padded = [&](std::size_t i) -> double {
    const auto idx = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
    std::ptrdiff_t j = idx < 0 ? -idx : idx;
    const auto last = static_cast<std::ptrdiff_t>(len) - 1;
    if (j > last) j = 2 * last - j;
    return window[static_cast<std::size_t>(j)];
  };

  std::vector<double> hann(n);
  for (std::size_t i = 0; i < n; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                   static_cast<double>(n));

  const std::size_t n_frames = 1 + len / hop;
  const auto target = static_cast<std::size_t>(cfg.target_frames);
  const std::size_t bins = n / 2 + 1;
  Tensor out({bins, target});

  Fft fft(n);
  std::vector<double> frame(n), power(bins);
  const std::size_t computed = std::min(n_frames, target);
  for (std::size_t t = 0; t < computed; ++t) {
    for (std::size_t i = 0; i < n; ++i) frame[i] = padded(t * hop + i) * hann[i];
    fft.power_spectrum(frame, power);
    for (std::size_t k = 0; k < bins; ++k) out.at(k, t) = power[k];
  }
  for (std::size_t t = computed; t < target; ++t)
    for (std::size_t k = 0; k < bins; ++k) out.at(k, t) = out.at(k, computed - 1);
  return out;
}

FilterBank build_linear_filterbank(const FrontendConfig& cfg, int sample_rate_hz) {
  if (cfg.n_filters < 1) throw UsageError("filterbank: n_filters must be >= 1");
  const auto nf = static_cast<std::size_t>(cfg.n_filters);
  const std::size_t bins = cfg.n_bins();
  const double nyquist = sample_rate_hz / 2.0;

  FilterBank fb;
  fb.band_edges.resize(nf + 2);
  for (std::size_t i = 0; i < nf + 2; ++i)
    fb.band_edges[i] = nyquist * static_cast<double>(i) / static_cast<double>(nf + 1);

  fb.weights = Tensor({nf, bins});
  for (std::size_t f = 0; f < nf; ++f) {
    const double lo = fb.band_edges[f], mid = fb.band_edges[f + 1], hi = fb.band_edges[f + 2];
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double freq = static_cast<double>(k) * sample_rate_hz / cfg.window_size;
      double w = 0.0;
      if (freq > lo && freq <= mid)
        w = (freq - lo) / (mid - lo);
      else if (freq > mid && freq < hi)
        w = (hi - freq) / (hi - mid);
      fb.weights.at(f, k) = w;
      any = any || w > 0.0;
    }
    if (!any)
      throw UsageError("filterbank: filter " + std::to_string(f) +
                       " has no positive weight; n_filters too large for the FFT resolution");
  }
  return fb;
}

Tensor apply_filterbank_log(const Tensor& power, const FilterBank& fb, double log_floor) {
  if (power.rank() != 2 || fb.weights.rank() != 2 || power.dim(0) != fb.weights.dim(1))
    throw UsageError("apply_filterbank_log: shape mismatch " + fb.weights.shape_string() + " * " +
                     power.shape_string());
  const std::size_t nf = fb.weights.dim(0), bins = power.dim(0), frames = power.dim(1);
  Tensor out({nf, frames});
  simd::active().gemm_nn(nf, frames, bins, fb.weights.data(), bins, power.data(), frames,
                         out.data(), frames);
  for (auto& v : out.values()) v = std::log(std::max(v, 0.0) + log_floor);
  return out;
}

Tensor compute_delta(const Tensor& m, int width) {
  if (width < 3 || width % 2 == 0) throw UsageError("compute_delta: width must be odd and >= 3");
  if (m.rank() != 2 || m.dim(1) < 1) throw DataError("compute_delta: need at least one frame");
  const std::size_t rows = m.dim(0);
  const auto frames = static_cast<std::ptrdiff_t>(m.dim(1));
  const int reach = (width - 1) / 2;
  double denom = 0.0;
  for (int d = 1; d <= reach; ++d) denom += static_cast<double>(d * d);
  denom *= 2.0;

  Tensor out({rows, m.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * m.dim(1);
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (int d = 1; d <= reach; ++d) {
        const auto fwd = std::min<std::ptrdiff_t>(t + d, frames - 1);
        const auto back = std::max<std::ptrdiff_t>(t - d, 0);
        acc += d * (row[fwd] - row[back]);
      }
      out.at(r, static_cast<std::size_t>(t)) = acc / denom;
    }
  }
  return out;
}

SpectrogramTensor spec_augment(const SpectrogramTensor& t, const SpecAugParams& p, Rng& rng) {
  SpectrogramTensor out = t;
  if (!p.enabled) return out;
  const auto& shape = t.data.shape();
  if (shape.size() != 3) throw UsageError("spec_augment: expected a 3-D tensor");
  const std::size_t ch = shape[0], rows = shape[1], cols = shape[2];
  if (p.max_freq_mask > static_cast<int>(rows) || p.max_time_mask > static_cast<int>(cols))
    throw UsageError("spec_augment: mask width exceeds axis length");

  std::vector<double> mean(ch);
  for (std::size_t c = 0; c < ch; ++c)
    mean[c] = simd::active().sum(t.data.data() + c * rows * cols, rows * cols) /
              static_cast<double>(rows * cols);

  auto mask_rows = [&](std::size_t start, std::size_t width) {
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t r = start; r < start + width; ++r)
        std::fill_n(out.data.data() + (c * rows + r) * cols, cols, mean[c]);
  };
  auto mask_cols = [&](std::size_t start, std::size_t width) {
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t r = 0; r < rows; ++r)
        std::fill_n(out.data.data() + (c * rows + r) * cols + start, width, mean[c]);
  };

  for (int i = 0; i < p.n_freq_masks; ++i) {
    const auto width = static_cast<std::size_t>(uniform_upto(rng, static_cast<std::uint64_t>(p.max_freq_mask)));
    const auto start = static_cast<std::size_t>(uniform_upto(rng, rows - width));
    mask_rows(start, width);
  }
  for (int i = 0; i < p.n_time_masks; ++i) {
    const auto width = static_cast<std::size_t>(uniform_upto(rng, static_cast<std::uint64_t>(p.max_time_mask)));
    const auto start = static_cast<std::size_t>(uniform_upto(rng, cols - width));
    mask_cols(start, width);
  }
  return out;
}

SpectrogramTensor features_for_window(std::span<const double> window, const FrontendConfig& cfg,
                                      const FilterBank& fb) {
  const Tensor power = stft_power(window, cfg);
  const Tensor base = apply_filterbank_log(power, fb, cfg.log_floor);
  const Tensor d1 = compute_delta(base, cfg.delta_width);
  const Tensor d2 = compute_delta(d1, cfg.delta_width);

  const std::size_t f = base.dim(0), t = base.dim(1);
  SpectrogramTensor out;
  out.data = Tensor({3, f, t});
  std::copy(base.values().begin(), base.values().end(), out.data.data());
  std::copy(d1.values().begin(), d1.values().end(), out.data.data() + f * t);
  std::copy(d2.values().begin(), d2.values().end(), out.data.data() + 2 * f * t);
  return out;
}

std::vector<SpectrogramTensor> extract_features(const AudioClip& clip, const FrontendConfig& cfg,
                                                bool training, std::uint64_t augment_seed) {
  cfg.validate();
  clip.validate();
  if (clip.sample_rate_hz != cfg.sample_rate_hz)
    throw DataError("sample rate mismatch for " + clip.utt_id + ": got " +
                    std::to_string(clip.sample_rate_hz) + " Hz, expected " +
                    std::to_string(cfg.sample_rate_hz) + " Hz");
  const FilterBank fb = build_linear_filterbank(cfg, cfg.sample_rate_hz);
  const auto windows = segment_audio(clip, cfg);

  std::vector<SpectrogramTensor> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    SpectrogramTensor s = features_for_window(windows[i], cfg, fb);
    s.source_utt = clip.utt_id;
    s.segment_index = static_cast<int>(i);
    if (training) {
      Rng rng(derive_seed(augment_seed, clip.utt_id, i));
      s = spec_augment(s, cfg.specaug, rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace din
