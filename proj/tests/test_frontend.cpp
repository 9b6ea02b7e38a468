#include <cmath>
#include <numbers>

#include "din/audio.hpp"
#include "din/error.hpp"
#include "din/feature_cache.hpp"
#include "din/frontend.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace din;
using din::testing::random_tensor;

namespace {

AudioClip sine_clip(double seconds, double freq, double amp = 0.5, int sr = 16000) {
  AudioClip c;
  c.sample_rate_hz = sr;
  c.utt_id = "sine";
  const auto n = static_cast<std::size_t>(std::llround(seconds * sr));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / sr);
  return c;
}

}  // namespace

TEST_SUITE("frontend") {
TEST_CASE("segmentation keeps, tiles or drops the tail") {
  FrontendConfig cfg;
  CHECK(segment_audio(sine_clip(4.0, 440), cfg).size() == 1);
  CHECK(segment_audio(sine_clip(9.0, 440), cfg).size() == 3);   // 1 s tail = 25 %
  CHECK(segment_audio(sine_clip(8.5, 440), cfg).size() == 2);   // 0.5 s tail dropped
  const AudioClip shortc = sine_clip(0.1, 440);
  const auto segs = segment_audio(shortc, cfg);
  REQUIRE(segs.size() == 1);
  REQUIRE(segs[0].size() == 64000);
  for (std::size_t i = 0; i < segs[0].size(); i += 997)
    CHECK(segs[0][i] == shortc.samples[i % shortc.samples.size()]);
  AudioClip empty;
  CHECK_THROWS_AS(segment_audio(empty, cfg), DataError);
}

TEST_CASE("bin-aligned sine puts its power in one bin and two Hann sidelobes") {
  FrontendConfig cfg;
  const int k0 = 64;
  const double freq = k0 * 16000.0 / cfg.window_size;  // 1000 Hz
  const AudioClip c = sine_clip(4.0, freq, 1.0);
  const Tensor p = stft_power(c.samples, cfg);
  REQUIRE(p.dim(0) == 513);
  REQUIRE(p.dim(1) == 128);
  const std::size_t t = 60;
  const double peak = p.at(k0, t);
  CHECK(peak == doctest::Approx(std::pow(cfg.window_size / 4.0, 2)).epsilon(1e-9));
  CHECK(p.at(k0 - 1, t) == doctest::Approx(peak / 4).epsilon(1e-9));
  CHECK(p.at(k0 + 1, t) == doctest::Approx(peak / 4).epsilon(1e-9));
  for (std::size_t k = 0; k < 513; ++k)
    if (k + 1 < static_cast<std::size_t>(k0) || k > static_cast<std::size_t>(k0) + 1)
      CHECK(p.at(k, t) < 1e-12 * peak);
}

TEST_CASE("one-sided power satisfies Parseval for interior frames") {
  FrontendConfig cfg;
  Rng rng(3);
  std::vector<double> x(64000);
  for (auto& v : x) v = 0.3 * standard_normal(rng);
  const Tensor p = stft_power(x, cfg);
  const std::size_t n = 1024, hop = 512;
  for (std::size_t t : {1u, 17u, 100u, 123u}) {
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
      const double s = x[t * hop + i - n / 2] * w;
      energy += s * s;
    }
    double spec = p.at(0, t) + p.at(n / 2, t);
    for (std::size_t k = 1; k < n / 2; ++k) spec += 2.0 * p.at(k, t);
    CHECK(spec == doctest::Approx(n * energy).epsilon(1e-10));
  }
}

TEST_CASE("frame count is trimmed or edge-padded to target_frames") {
  FrontendConfig cfg;
  cfg.target_frames = 200;
  const Tensor p = stft_power(sine_clip(4.0, 500).samples, cfg);
  REQUIRE(p.dim(1) == 200);
  for (std::size_t k = 0; k < p.dim(0); k += 50)
    for (std::size_t t = 126; t < 200; ++t) CHECK(p.at(k, t) == p.at(k, 125));
}

TEST_CASE("linear filterbank edges and triangles") {
  FrontendConfig cfg;
  cfg.n_filters = 3;
  const FilterBank fb = build_linear_filterbank(cfg, 16000);
  REQUIRE(fb.band_edges.size() == 5);
  const double want[5] = {0, 2000, 4000, 6000, 8000};
  for (int i = 0; i < 5; ++i) CHECK(fb.band_edges[i] == doctest::Approx(want[i]));
  const double df = 16000.0 / 1024;
  // Filter 1 spans 2000..6000 Hz with its apex at 4000 Hz (bin 256).
  CHECK(fb.weights.at(1, 256) == doctest::Approx(1.0));
  CHECK(fb.weights.at(1, 192) == doctest::Approx((192 * df - 2000) / 2000));
  CHECK(fb.weights.at(1, 128) == 0.0);
  CHECK(fb.weights.at(1, 384) == 0.0);

  cfg.n_filters = 2;
  const FilterBank fb2 = build_linear_filterbank(cfg, 16000);
  REQUIRE(fb2.band_edges.size() == 4);
  CHECK(fb2.band_edges[1] == doctest::Approx(8000.0 / 3));

  FrontendConfig def;
  const FilterBank full = build_linear_filterbank(def, 16000);
  REQUIRE(full.weights.dim(0) == 128);
  REQUIRE(full.weights.dim(1) == 513);
  // Overlapping triangles sum to one strictly between the first and last apex.
  for (std::size_t k = 0; k < 513; ++k) {
    const double f = k * df;
    double s = 0.0;
    int positive = 0;
    for (std::size_t m = 0; m < 128; ++m) {
      positive += full.weights.at(m, k) > 0.0;
      CHECK(full.weights.at(m, k) >= 0.0);
      CHECK(full.weights.at(m, k) <= 1.0);
      s += full.weights.at(m, k);
    }
    CHECK(positive <= 2);
    if (f > full.band_edges[1] && f < full.band_edges[128]) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  cfg.n_filters = 2000;
  CHECK_THROWS_AS(build_linear_filterbank(cfg, 16000), UsageError);
}

TEST_CASE("log filterbank of silence is ln(log_floor)") {
  FrontendConfig cfg;
  const FilterBank fb = build_linear_filterbank(cfg, 16000);
  const Tensor out = apply_filterbank_log(Tensor({513, 128}), fb, cfg.log_floor);
  for (double v : out.values()) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("delta is linear, exact on ramps and zero on constants") {
  Rng rng(5);
  const Tensor a = random_tensor({4, 40}, rng), b = random_tensor({4, 40}, rng);
  Tensor mix({4, 40});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * a[i] - 0.75 * b[i];
  const Tensor da = compute_delta(a, 9), db = compute_delta(b, 9), dm = compute_delta(mix, 9);
  for (std::size_t i = 0; i < dm.size(); ++i) CHECK(dm[i] == doctest::Approx(2.5 * da[i] - 0.75 * db[i]).epsilon(1e-12));

  Tensor ramp({2, 30});
  for (std::size_t t = 0; t < 30; ++t) {
    ramp.at(0, t) = 0.5 * t + 3.0;
    ramp.at(1, t) = -7.0;
  }
  const Tensor dr = compute_delta(ramp, 9);
  for (std::size_t t = 4; t < 26; ++t) CHECK(dr.at(0, t) == doctest::Approx(0.5));
  for (std::size_t t = 0; t < 30; ++t) CHECK(dr.at(1, t) == 0.0);
  CHECK_THROWS_AS(compute_delta(ramp, 4), UsageError);
}

TEST_CASE("SpecAug: disabled is the identity, enabled masks with channel means") {
  Rng rng(9);
  SpectrogramTensor t{random_tensor({3, 128, 128}, rng), "u", 0};
  SpecAugParams off;
  off.enabled = false;
  Rng r1(1);
  const auto same = spec_augment(t, off, r1);
  for (std::size_t i = 0; i < t.data.size(); ++i) REQUIRE(same.data[i] == t.data[i]);

  SpecAugParams on;
  Rng r2(42), r3(42);
  const auto a = spec_augment(t, on, r2), b = spec_augment(t, on, r3);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    REQUIRE(a.data[i] == b.data[i]);
    if (a.data[i] != t.data[i]) ++changed;
  }
  const std::size_t plane = 128 * 128;
  CHECK(changed <= 3 * (2 * 16 * 128 + 2 * 20 * 128));
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += t.data[c * plane + i];
    mean /= plane;
    for (std::size_t i = 0; i < plane; ++i)
      if (a.data[c * plane + i] != t.data[c * plane + i])
        CHECK(a.data[c * plane + i] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("extract_features yields 3x128x128 tensors for clips from 0.1 s up") {
  FrontendConfig cfg;
  for (double secs : {0.1, 0.5, 3.99, 4.0, 5.0, 9.0}) {
    const auto segs = extract_features(sine_clip(secs, 300), cfg, false);
    REQUIRE(!segs.empty());
    for (const auto& s : segs) {
      CHECK(s.data.shape() == std::vector<std::size_t>{3, 128, 128});
      CHECK(s.data.all_finite());
    }
  }
  AudioClip wrong = sine_clip(1.0, 300, 0.5, 8000);
  CHECK_THROWS_AS(extract_features(wrong, cfg, false), DataError);
}

TEST_CASE("training-mode extraction is reproducible per seed") {
  FrontendConfig cfg;
  const AudioClip c = sine_clip(4.0, 700);
  const auto a = extract_features(c, cfg, true, 5), b = extract_features(c, cfg, true, 5);
  const auto plain = extract_features(c, cfg, false);
  bool differs = false;
  for (std::size_t i = 0; i < a[0].data.size(); ++i) {
    REQUIRE(a[0].data[i] == b[0].data[i]);
    differs = differs || a[0].data[i] != plain[0].data[i];
  }
  CHECK(differs);
}

TEST_CASE("feature cache write-read-write is byte-identical") {
  FrontendConfig cfg;
  const auto segs = extract_features(sine_clip(9.0, 250), cfg, false);
  const std::string bytes = encode_feature_cache(segs);
  const auto back = decode_feature_cache(bytes, "sine");
  REQUIRE(back.size() == segs.size());
  CHECK(encode_feature_cache(back) == bytes);
  CHECK(back[2].segment_index == 2);
  CHECK_THROWS_AS(decode_feature_cache(bytes.substr(0, bytes.size() - 3), "x"), DataError);
}

TEST_CASE("WAV encode and decode round trip at 16-bit precision") {
  const AudioClip c = sine_clip(0.25, 1234, 0.8);
  const auto dir = std::filesystem::temp_directory_path() / "din_test_wav";
  write_wav(dir / "a.wav", c.samples, 16000);
  const AudioClip back = read_wav(dir / "a.wav", "a");
  REQUIRE(back.samples.size() == c.samples.size());
  CHECK(back.sample_rate_hz == 16000);
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - c.samples[i]) <= 2.0 / 32768);
  std::filesystem::remove_all(dir);
}
}
