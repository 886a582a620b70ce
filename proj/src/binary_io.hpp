#pragma once

// Little-endian encoding helpers and checksums shared by the on-disk formats.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stackvs/errors.hpp"

namespace stackvs::detail {

using Bytes = std::vector<unsigned char>;

template <typename U>
void put_le(Bytes& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f32(Bytes& out, float f) { put_le(out, std::bit_cast<std::uint32_t>(f)); }

inline void put_bytes(Bytes& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

/// Sequential reader that reports the byte offset of any short read.
class Reader {
 public:
  Reader(const Bytes& data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(data_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated at byte " + std::to_string(data_.size()) + " (needed " +
                        std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ")");
    }
  }

  const Bytes& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const Bytes& data);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

std::uint32_t crc32_of(const unsigned char* data, std::size_t n);
inline std::uint32_t crc32_of(const Bytes& b) { return crc32_of(b.data(), b.size()); }
inline std::uint32_t crc32_of(std::string_view s) {
  return crc32_of(reinterpret_cast<const unsigned char*>(s.data()), s.size());
}

/// 16-byte MD5 digest.
std::array<unsigned char, 16> md5_of(std::string_view s);

}  // namespace stackvs::detail
