#include "din/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "din/audio.hpp"
#include "din/error.hpp"
#include "din/io_util.hpp"
#include "din/rng.hpp"

namespace din {

GroupMap default_group_map() {
  return {{"A01", Group::kTts}, {"A02", Group::kTts}, {"A03", Group::kTts},
          {"A04", Group::kTts}, {"A05", Group::kVc},  {"A06", Group::kVc}};
}

std::string group_name(Group g) {
  switch (g) {
    case Group::kBonafide: return "bonafide";
    case Group::kTts: return "TTS";
    case Group::kVc: return "VC";
    case Group::kUnknown: return "unknown";
  }
  return "unknown";
}

Group parse_group(std::string_view s) {
  if (s == "bonafide") return Group::kBonafide;
  if (s == "TTS") return Group::kTts;
  if (s == "VC") return Group::kVc;
  if (s == "unknown") return Group::kUnknown;
  throw DataError("unknown group '" + std::string(s) + "' (expected bonafide, TTS, VC)");
}

int stage1_class(const ManifestEntry& e, const GroupMap& map) {
  if (e.key == Key::kBonafide) return 0;
  const auto it = map.find(e.generator_id);
  if (it == map.end())
    throw DataError("generator '" + e.generator_id + "' of " + e.utt_id + " not in group map");
  return 1 + static_cast<int>(std::distance(map.begin(), it));
}

namespace {

template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    f(line_no, text.substr(pos, end - pos));
    pos = end + 1;
  }
}

Key parse_key(std::string_view s, const std::string& where) {
  if (s == "bonafide") return Key::kBonafide;
  if (s == "spoof") return Key::kSpoof;
  throw DataError(where + ": key must be bonafide or spoof, got '" + std::string(s) + "'");
}

void check_entry(const ManifestEntry& e, const std::string& where) {
  if (e.key == Key::kBonafide && (e.generator_id != "-" || e.group != Group::kBonafide))
    throw DataError(where + ": bonafide entry must have generator '-' and group bonafide");
  if (e.key == Key::kSpoof && e.group == Group::kBonafide)
    throw DataError(where + ": spoof entry cannot be in group bonafide");
}

}  // namespace

std::vector<ManifestEntry> parse_cm_protocol(std::string_view text, const GroupMap& map,
                                             const std::filesystem::path& audio_dir,
                                             bool allow_unmapped) {
  std::vector<ManifestEntry> out;
  std::vector<std::string> unmapped;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = io::split_ws(line);
    if (f.empty()) return;
    const std::string where = "protocol line " + std::to_string(line_no);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.utt_id = f[1];
    e.wav_path = audio_dir / (f[1] + ".wav");
    e.key = parse_key(f[4], where);
    if (e.key == Key::kBonafide) {
      e.generator_id = "-";
      e.group = Group::kBonafide;
    } else {
      e.generator_id = f[3];
      const auto it = map.find(f[3]);
      if (it != map.end()) {
        e.group = it->second;
      } else {
        e.group = Group::kUnknown;
        if (std::find(unmapped.begin(), unmapped.end(), f[3]) == unmapped.end())
          unmapped.push_back(f[3]);
      }
    }
    out.push_back(std::move(e));
  });
  if (!unmapped.empty() && !allow_unmapped) {
    std::string names;
    for (const auto& u : unmapped) names += (names.empty() ? "" : ", ") + u;
    throw DataError("protocol: system ids without group mapping: " + names);
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries)
    out += e.wav_path.generic_string() + '\t' + e.utt_id + '\t' +
           (e.key == Key::kBonafide ? "bonafide" : "spoof") + '\t' + e.generator_id + '\t' +
           group_name(e.group) + '\n';
  return out;
}

std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                          const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto f = io::split_ws(line);
    if (f.empty()) return;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    ManifestEntry e;
    e.wav_path = f[0];
    if (e.wav_path.is_relative()) e.wav_path = base_dir / e.wav_path;
    e.utt_id = f[1];
    e.key = parse_key(f[2], where);
    e.generator_id = f[3];
    e.group = parse_group(f[4]);
    check_entry(e, where);
    out.push_back(std::move(e));
  });
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  io::atomic_write(path, format_manifest(entries));
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_file(path), path.parent_path());
}

void SyntheticDatasetSpec::validate() const {
  if (n_per_class < 1) throw UsageError("synth: n_per_class must be >= 1");
  if (!(duration_s > 0.0)) throw UsageError("synth: duration_s must be > 0");
  if (sample_rate_hz < 8000) throw UsageError("synth: sample_rate_hz must be >= 8000");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

void normalize_peak(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (double& v : x) v *= peak / m;
}

}  // namespace

std::vector<double> synth_bonafide(std::uint64_t seed, std::size_t n, int sr) {
  Rng rng(seed);
  const double f0 = uniform(rng, 100.0, 200.0);
  const double vib_rate = uniform(rng, 4.5, 6.5), vib_depth = uniform(rng, 0.02, 0.05);
  const double vib_phase = uniform(rng, 0.0, kTwoPi);
  const double drift = uniform(rng, 0.85, 1.15);
  const double formants[3] = {uniform(rng, 300.0, 800.0), uniform(rng, 1000.0, 2200.0),
                              uniform(rng, 2400.0, 3200.0)};
  const double syl_rate = uniform(rng, 3.0, 5.0), syl_phase = uniform(rng, 0.0, kTwoPi);
  const double fs = static_cast<double>(sr);
  const std::size_t n_harm = static_cast<std::size_t>(0.45 * fs / (f0 * 1.35));

  std::vector<double> amp(n_harm), phase(n_harm);
  for (std::size_t h = 0; h < n_harm; ++h) {
    const double f = static_cast<double>(h + 1) * f0;
    double env = 0.03;
    for (double fm : formants) env += std::exp(-0.5 * (f - fm) * (f - fm) / (150.0 * 150.0));
    amp[h] = env / std::sqrt(static_cast<double>(h + 1));
    phase[h] = uniform(rng, 0.0, kTwoPi);
  }
  std::vector<double> out(n, 0.0);
  double base_phase = 0.0;
  const double total = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    const double glide = 1.0 + (drift - 1.0) * static_cast<double>(i) / total;
    const double f_inst = f0 * glide * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * t + vib_phase));
    base_phase += kTwoPi * f_inst / fs;
    double s = 0.0;
    for (std::size_t h = 0; h < n_harm; ++h)
      s += amp[h] * std::sin(static_cast<double>(h + 1) * base_phase + phase[h]);
    const double syl = 0.55 + 0.45 * std::sin(kTwoPi * syl_rate * t + syl_phase);
    out[i] = syl * s + 0.01 * standard_normal(rng);
  }
  normalize_peak(out, 0.5);
  return out;
}

std::vector<double> synth_tts_proxy(std::uint64_t seed, std::size_t n, int sr) {
  Rng rng(seed);
  const double fs = static_cast<double>(sr);
  const double fc = uniform(rng, 600.0, 3000.0), bw = uniform(rng, 300.0, 800.0);
  const double fm = uniform(rng, 2.0, 8.0), am_phase = uniform(rng, 0.0, kTwoPi);
  const double r = std::exp(-std::numbers::pi * bw / fs);
  const double a1 = 2.0 * r * std::cos(kTwoPi * fc / fs), a2 = -r * r;
  std::vector<double> out(n);
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = standard_normal(rng) + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    const double t = static_cast<double>(i) / fs;
    out[i] = y * (0.2 + 0.8 * (0.5 + 0.5 * std::sin(kTwoPi * fm * t + am_phase)));
  }
  normalize_peak(out, 0.5);
  return out;
}

std::vector<double> synth_vc_proxy(std::uint64_t seed, std::size_t n, int sr) {
  Rng rng(seed);
  const double fs = static_cast<double>(sr);
  const double f0 = uniform(rng, 100.0, 200.0) * uniform(rng, 1.3, 1.6);
  const double am_rate = uniform(rng, 2.0, 5.0);
  const std::size_t n_harm = static_cast<std::size_t>(0.45 * fs / f0);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double s = 0.0;
    for (std::size_t h = 1; h <= n_harm; ++h)
      s += std::cos(kTwoPi * static_cast<double>(h) * f0 * t) / static_cast<double>(h);
    out[i] = s * (0.7 + 0.3 * std::sin(kTwoPi * am_rate * t)) + 0.002 * standard_normal(rng);
  }
  normalize_peak(out, 0.5);
  return out;
}

SyntheticSplits generate_synthetic_dataset(const SyntheticDatasetSpec& spec,
                                           const std::filesystem::path& out_dir) {
  spec.validate();
  const std::size_t n_samples =
      static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
  struct ClassRecipe {
    const char* prefix;
    Key key;
    const char* generator;
    Group group;
    std::vector<double> (*make)(std::uint64_t, std::size_t, int);
  };
  const ClassRecipe recipes[3] = {
      {"bona", Key::kBonafide, "-", Group::kBonafide, synth_bonafide},
      {"tts", Key::kSpoof, "S01", Group::kTts, synth_tts_proxy},
      {"vc", Key::kSpoof, "S02", Group::kVc, synth_vc_proxy},
  };
  const std::size_t n = static_cast<std::size_t>(spec.n_per_class);
  const std::size_t n_train = n * 6 / 10, n_dev = n * 2 / 10;

  SyntheticSplits splits;
  std::vector<ManifestEntry> all;
  for (std::size_t c = 0; c < 3; ++c) {
    const ClassRecipe& rc = recipes[c];
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05zu", rc.prefix, i);
      ManifestEntry e;
      e.utt_id = id;
      e.wav_path = std::filesystem::path("wav") / (e.utt_id + ".wav");
      e.key = rc.key;
      e.generator_id = rc.generator;
      e.group = rc.group;
      const auto samples = rc.make(derive_seed(spec.seed, e.utt_id, 0), n_samples, spec.sample_rate_hz);
      write_wav(out_dir / e.wav_path, samples, spec.sample_rate_hz);
      entries.push_back(e);
    }
    all.insert(all.end(), entries.begin(), entries.end());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(spec.seed, "split", c));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_upto(rng, i - 1)]);
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_train ? splits.train : (k < n_train + n_dev ? splits.dev : splits.eval);
      dst.push_back(entries[order[k]]);
    }
  }
  write_manifest(out_dir / "all.lst", all);
  write_manifest(out_dir / "train.lst", splits.train);
  write_manifest(out_dir / "dev.lst", splits.dev);
  write_manifest(out_dir / "eval.lst", splits.eval);
  return splits;
}

}  // namespace din
