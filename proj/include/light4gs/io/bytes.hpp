#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "light4gs/errors.hpp"

namespace l4gs::io {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);
inline std::uint32_t crc32(const Bytes& b) { return crc32(b.data(), b.size()); }

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& bytes);

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void u8(std::uint8_t v) { put(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void i32(std::int32_t v) { put(v); }
  void f32(double v) { put(static_cast<float>(v)); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void raw(const Bytes& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  /// Each value as float32, no length prefix.
  template <typename Range>
  void f32s(const Range& values) {
    for (double v : values) f32(v);
  }

  std::size_t size() const { return bytes_.size(); }
  Bytes& bytes() { return bytes_; }
  Bytes take() { return std::move(bytes_); }

 private:
  Bytes bytes_;
};

/// Bounds-checked reader; every overrun raises FormatError naming `context`.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}
  explicit ByteReader(const Bytes& b, std::string context) : ByteReader(b.data(), b.size(), std::move(context)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f32() { return static_cast<double>(get<float>()); }
  const std::uint8_t* raw(std::size_t n) {
    need(n);
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  /// u32 count checked against the bytes left, assuming `elem_size` per element.
  std::size_t count(std::size_t elem_size, std::string_view what) {
    const std::size_t n = u32();
    if (elem_size && n > remaining() / elem_size)
      throw FormatError(context_ + ": " + std::string(what) + " count " + std::to_string(n) + " exceeds payload");
    return n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  const std::string& context() const { return context_; }
  void expect_end() const {
    if (pos_ != size_) throw FormatError(context_ + ": " + std::to_string(size_ - pos_) + " trailing bytes");
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(context_ + ": " + msg); }

 private:
  void need(std::size_t n) const {
    if (n > size_ - pos_)
      throw FormatError(context_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                        ", have " + std::to_string(size_ - pos_) + ")");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace l4gs::io
