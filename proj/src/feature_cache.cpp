#include "din/feature_cache.hpp"

#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

std::string encode_feature_cache(const std::vector<SpectrogramTensor>& segments) {
  if (segments.empty()) throw UsageError("feature cache: no segments");
  const auto& shape = segments.front().data.shape();
  if (shape.size() != 3 || shape[0] != 3) throw UsageError("feature cache: expected 3 x F x T");
  io::ByteWriter w;
  w.put_bytes("DINF");
  w.put_u32(kFeatureCacheVersion);
  w.put_u32(static_cast<std::uint32_t>(shape[1]));
  w.put_u32(static_cast<std::uint32_t>(shape[2]));
  for (const auto& s : segments) {
    if (s.data.shape() != shape) throw UsageError("feature cache: segment shapes differ");
    for (double v : s.data.values()) w.put_f32(static_cast<float>(v));
  }
  return w.bytes();
}

std::vector<SpectrogramTensor> decode_feature_cache(std::string_view bytes,
                                                    const std::string& utt_id) {
  io::ByteReader r(bytes, "feature cache " + utt_id);
  if (r.get_bytes(4) != "DINF") throw DataError("feature cache: bad magic for " + utt_id);
  if (r.get_u32() != kFeatureCacheVersion)
    throw DataError("feature cache: unsupported version for " + utt_id);
  const std::size_t f = r.get_u32(), t = r.get_u32();
  const std::size_t per = 3 * f * t * sizeof(float);
  if (per == 0 || r.remaining() % per != 0 || r.remaining() == 0)
    throw DataError("feature cache: payload size is not a whole number of segments for " + utt_id);
  const std::size_t n = r.remaining() / per;
  std::vector<SpectrogramTensor> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].data = Tensor({3, f, t});
    out[i].source_utt = utt_id;
    out[i].segment_index = static_cast<int>(i);
    for (auto& v : out[i].data.values()) v = r.get_f32();
  }
  return out;
}

void write_feature_cache(const std::filesystem::path& path,
                         const std::vector<SpectrogramTensor>& segments) {
  io::atomic_write(path, encode_feature_cache(segments));
}

std::vector<SpectrogramTensor> read_feature_cache(const std::filesystem::path& path,
                                                  const std::string& utt_id) {
  return decode_feature_cache(io::read_file(path), utt_id);
}

std::filesystem::path feature_cache_path(const std::filesystem::path& dir,
                                         const std::string& utt_id) {
  return dir / (utt_id + ".dinf");
}

}  // namespace din
