#pragma once

// Little-endian encoding helpers shared by the checkpoint and dataset formats.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace failcast {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f32s(std::span<const float> values) {
    for (float v : values) f32(v);
  }
  const std::vector<char>& buffer() const { return buf_; }
  std::vector<char> take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::vector<char> buf_;
};

// Reads little-endian values; throws FormatError with the byte offset when
// the buffer runs out.
class ByteReader {
 public:
  ByteReader(std::span<const char> data, std::string what)
      : data_(data), what_(std::move(what)) {}

  std::string bytes(std::size_t n);
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32();
  void f32s(std::span<float> out);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t get(int n);
  void need(std::size_t n);

  std::span<const char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> data);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::span<const char> data);

}  // namespace failcast
