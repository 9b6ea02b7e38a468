#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "din/frontend.hpp"

namespace din {

/// Per-utterance feature file: 16-byte header ("DINF", version, F, T as u32)
/// then 3*F*T little-endian f32 values per segment, channel-major, segments
/// concatenated.
inline constexpr std::uint32_t kFeatureCacheVersion = 1;

std::string encode_feature_cache(const std::vector<SpectrogramTensor>& segments);
std::vector<SpectrogramTensor> decode_feature_cache(std::string_view bytes,
                                                    const std::string& utt_id);

void write_feature_cache(const std::filesystem::path& path,
                         const std::vector<SpectrogramTensor>& segments);
std::vector<SpectrogramTensor> read_feature_cache(const std::filesystem::path& path,
                                                  const std::string& utt_id);

/// Location of an utterance's cache file inside a feature directory.
std::filesystem::path feature_cache_path(const std::filesystem::path& dir,
                                         const std::string& utt_id);

}  // namespace din
