#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace din {

/// One utterance of mono audio, amplitudes nominally in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 16000;
  std::string utt_id;

  /// Throws DataError unless every sample is finite and the rate is positive.
  void validate() const;
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

/// Reads a 16-bit signed little-endian mono PCM WAV file.
AudioClip read_wav(const std::filesystem::path& path, std::string utt_id = {});

/// Encodes samples (clipped to [-1, 1]) as 16-bit mono PCM WAV bytes.
std::string encode_wav(const std::vector<double>& samples, int sample_rate_hz);

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate_hz);

}  // namespace din
