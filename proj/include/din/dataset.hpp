#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "din/losses.hpp"

namespace din {

enum class Key { kBonafide, kSpoof };

struct ManifestEntry {
  std::filesystem::path wav_path;
  std::string utt_id;
  Key key = Key::kBonafide;
  std::string generator_id = "-";
  Group group = Group::kBonafide;
};

/// generator_id -> TTS or VC.
using GroupMap = std::map<std::string, Group>;

GroupMap default_group_map();
std::string group_name(Group g);
Group parse_group(std::string_view s);

/// Stage-1 class of an entry: 0 for bonafide, 1 + position of the generator
/// in the sorted group map otherwise.
int stage1_class(const ManifestEntry& e, const GroupMap& map);

/// ASVspoof CM protocol: `speaker utt_id - system_id key` per line. Audio is
/// expected at audio_dir/utt_id.wav. Every spoof system must be in `map`
/// unless `allow_unmapped`, in which case its group is kUnknown.
std::vector<ManifestEntry> parse_cm_protocol(std::string_view text, const GroupMap& map,
                                             const std::filesystem::path& audio_dir,
                                             bool allow_unmapped = false);

/// Manifest TSV: `wav_path utt_id key generator_id group`. Relative wav paths
/// are resolved against `base_dir` when reading and written as given.
std::string format_manifest(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                          const std::filesystem::path& base_dir);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct SyntheticDatasetSpec {
  int n_per_class = 200;
  double duration_s = 4.0;
  std::uint64_t seed = 7;
  int sample_rate_hz = 16000;

  void validate() const;
};

/// Synthetic class recipes, one utterance each, deterministic per rng seed.
std::vector<double> synth_bonafide(std::uint64_t seed, std::size_t n, int sr);
std::vector<double> synth_tts_proxy(std::uint64_t seed, std::size_t n, int sr);
std::vector<double> synth_vc_proxy(std::uint64_t seed, std::size_t n, int sr);

struct SyntheticSplits {
  std::vector<ManifestEntry> train, dev, eval;
};

/// Writes out_dir/wav/*.wav and the manifests train.lst, dev.lst, eval.lst
/// and all.lst (60/20/20 split per class). Generators: S01 (TTS proxy) and
/// S02 (VC proxy).
SyntheticSplits generate_synthetic_dataset(const SyntheticDatasetSpec& spec,
                                           const std::filesystem::path& out_dir);

}  // namespace din
