#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rtc::io {

// FNV-1a over a byte range.
std::uint64_t fnv1a(std::string_view bytes);

// Appends little-endian fixed-width values to an in-memory buffer.
class Writer {
 public:
  void bytes(std::string_view b) { buf_.append(b); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::string& buffer() const { return buf_; }
  // Appends the checksum of everything written so far and writes the file.
  void finish_to_file(const std::filesystem::path& path);

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
  }
  std::string buf_;
};

// Bounds-checked reader over a file verified by its trailing checksum.
// Every read past the end throws FormatError.
class Reader {
 public:
  static Reader open_checked(const std::filesystem::path& path);
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::string_view bytes(std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const;

 private:
  std::uint64_t get(int width);
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace rtc::io
