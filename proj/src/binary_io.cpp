#include "rtc/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "rtc/error.hpp"

namespace rtc::io {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Writer::finish_to_file(const std::filesystem::path& path) {
  const std::uint64_t sum = fnv1a(buf_);
  u64(sum);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

Reader Reader::open_checked(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 8) throw FormatError(path.string() + ": file truncated");
  const std::string_view body(data.data(), data.size() - 8);
  Reader tail(data.substr(data.size() - 8));
  if (tail.u64() != fnv1a(body)) {
    throw FormatError(path.string() + ": checksum mismatch (corrupt or truncated)");
  }
  data.resize(data.size() - 8);
  return Reader(std::move(data));
}

std::string_view Reader::bytes(std::size_t n) {
  if (n > remaining()) throw FormatError("unexpected end of data");
  std::string_view out(data_.data() + pos_, n);
  pos_ += n;
  return out;
}

std::uint64_t Reader::get(int width) {
  const std::string_view b = bytes(static_cast<std::size_t>(width));
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  }
  return v;
}

std::uint8_t Reader::u8() { return static_cast<std::uint8_t>(get(1)); }
std::uint32_t Reader::u32() { return static_cast<std::uint32_t>(get(4)); }
std::uint64_t Reader::u64() { return get(8); }

std::string Reader::str() {
  const std::uint32_t n = u32();
  return std::string(bytes(n));
}

void Reader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(std::to_string(remaining()) + " trailing bytes after payload");
  }
}

}  // namespace rtc::io
