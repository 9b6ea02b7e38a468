#include "din/io_util.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "din/error.hpp"

namespace din::io {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {
template <typename T>
void append_raw(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}
}  // namespace

void ByteWriter::put_u8(std::uint8_t v) { append_raw(buf_, v); }
void ByteWriter::put_u16(std::uint16_t v) { append_raw(buf_, v); }
void ByteWriter::put_u32(std::uint32_t v) { append_raw(buf_, v); }
void ByteWriter::put_f32(float v) { append_raw(buf_, v); }
void ByteWriter::put_f64(double v) { append_raw(buf_, v); }

std::string_view ByteReader::get_bytes(std::size_t n) {
  if (remaining() < n) throw DataError(what_ + ": truncated at byte " + std::to_string(pos_));
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

namespace {
template <typename T>
T read_raw(ByteReader& r) {
  auto b = r.get_bytes(sizeof(T));
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}
}  // namespace

std::uint8_t ByteReader::get_u8() { return read_raw<std::uint8_t>(*this); }
std::uint16_t ByteReader::get_u16() { return read_raw<std::uint16_t>(*this); }
std::uint32_t ByteReader::get_u32() { return read_raw<std::uint32_t>(*this); }
float ByteReader::get_f32() { return read_raw<float>(*this); }
double ByteReader::get_f64() { return read_raw<double>(*this); }

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace din::io
