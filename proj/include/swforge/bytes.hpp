#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "swforge/error.hpp"

namespace swforge {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Appends big-endian fields to a byte vector.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes& out) : out_(&out) {}

  void u8(std::uint8_t v) { buf().push_back(v); }
  void u16(std::uint16_t v) {
    buf().push_back(static_cast<std::uint8_t>(v >> 8));
    buf().push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void bytes(ByteView v) { buf().insert(buf().end(), v.begin(), v.end()); }
  void str(std::string_view s) { buf().insert(buf().end(), s.begin(), s.end()); }

  // Overwrites a previously written 16-bit field.
  void patch_u16(std::size_t offset, std::uint16_t v) {
    buf()[offset] = static_cast<std::uint8_t>(v >> 8);
    buf()[offset + 1] = static_cast<std::uint8_t>(v);
  }

  std::size_t size() const { return out_ ? out_->size() : own_.size(); }
  Bytes take() { return std::move(own_); }

 private:
  Bytes& buf() { return out_ ? *out_ : own_; }

  Bytes own_;
  Bytes* out_ = nullptr;
};

/// Bounds-checked big-endian reader. Throws Errc::Truncated on underrun.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t hi = u16();
    return (hi << 16) | u16();
  }
  std::uint64_t u64() {
    std::uint64_t hi = u32();
    return (hi << 32) | u32();
  }
  ByteView take(std::size_t n) {
    need(n);
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }
  void skip(std::size_t n) { take(n); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool empty() const { return remaining() == 0; }
  ByteView rest() const { return data_.subspan(pos_); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(Errc::Truncated, "need " + std::to_string(n) + " bytes, have " +
                                       std::to_string(remaining()));
    }
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

std::string to_hex(ByteView data);
/// Parses hex text, ignoring whitespace and '#' comments to end of line.
Bytes from_hex(std::string_view text);

}  // namespace swforge
