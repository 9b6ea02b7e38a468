#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace din::io {

/// Writes `bytes` to `path` through a temporary sibling file and a rename, so
/// readers never observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Little-endian binary encoder.
class ByteWriter {
 public:
  void put_bytes(std::string_view s) { buf_.append(s); }
  void put_u8(std::uint8_t v);
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_f32(float v);
  void put_f64(double v);
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian binary decoder over a borrowed buffer. Every read past the
/// end throws DataError naming `what`.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}
  std::string_view get_bytes(std::size_t n);
  std::uint8_t get_u8();
  std::uint16_t get_u16();
  std::uint32_t get_u32();
  float get_f32();
  double get_f64();
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// Splits on runs of spaces/tabs.
std::vector<std::string> split_ws(std::string_view line);

}  // namespace din::io
