#include "din/audio.hpp"

#include <algorithm>
#include <cmath>

#include "din/error.hpp"
#include "din/io_util.hpp"

namespace din {

void AudioClip::validate() const {
  if (sample_rate_hz <= 0) throw DataError("non-positive sample rate for " + utt_id);
  for (double s : samples)
    if (!std::isfinite(s)) throw DataError("non-finite sample in " + utt_id);
}

AudioClip read_wav(const std::filesystem::path& path, std::string utt_id) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, "wav " + path.string());
  if (r.get_bytes(4) != "RIFF") throw DataError("not a RIFF file: " + path.string());
  r.get_u32();
  if (r.get_bytes(4) != "WAVE") throw DataError("not a WAVE file: " + path.string());

  bool have_fmt = false;
  AudioClip clip;
  clip.utt_id = utt_id.empty() ? path.stem().string() : std::move(utt_id);
  while (r.remaining() >= 8) {
    const std::string id(r.get_bytes(4));
    const std::uint32_t size = r.get_u32();
    if (id == "fmt ") {
      io::ByteReader f(r.get_bytes(size), "wav fmt " + path.string());
      const auto format = f.get_u16();
      const auto channels = f.get_u16();
      clip.sample_rate_hz = static_cast<int>(f.get_u32());
      f.get_u32();
      f.get_u16();
      const auto bits = f.get_u16();
      if (format != 1 || channels != 1 || bits != 16)
        throw DataError("unsupported wav (need 16-bit PCM mono): " + path.string());
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("wav data chunk before fmt: " + path.string());
      const std::size_t n = std::min<std::size_t>(size, r.remaining()) / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        clip.samples[i] = static_cast<std::int16_t>(r.get_u16()) / 32768.0;
      clip.validate();
      return clip;
    } else {
      r.get_bytes(std::min<std::size_t>(size + (size & 1u), r.remaining()));
    }
  }
  throw DataError("wav has no data chunk: " + path.string());
}

std::string encode_wav(const std::vector<double>& samples, int sample_rate_hz) {
  io::ByteWriter w;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  w.put_bytes("RIFF");
  w.put_u32(36 + data_bytes);
  w.put_bytes("WAVE");
  w.put_bytes("fmt ");
  w.put_u32(16);
  w.put_u16(1);
  w.put_u16(1);
  w.put_u32(static_cast<std::uint32_t>(sample_rate_hz));
  w.put_u32(static_cast<std::uint32_t>(sample_rate_hz) * 2);
  w.put_u16(2);
  w.put_u16(16);
  w.put_bytes("data");
  w.put_u32(data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const long q = std::lround(c * 32767.0);
    w.put_u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return w.bytes();
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate_hz) {
  io::atomic_write(path, encode_wav(samples, sample_rate_hz));
}

}  // namespace din
