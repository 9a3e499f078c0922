#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "ersinv/common.hpp"

// Little-endian binary helpers shared by the container formats.
namespace ersinv::detail {

static_assert(std::endian::native == std::endian::little, "container writer assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit, std::string what = "container")
      : bytes_(b), limit_(limit), what_(std::move(what)) {}
  template <typename T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > limit_) throw Error(ErrorCode::TruncatedFile, "unexpected end of " + what_);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t limit_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace ersinv::detail
