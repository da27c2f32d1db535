#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include <fmt/format.h>

namespace trajattr {

/// 64-bit FNV-1a, used for artifact fingerprints. Not cryptographic.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    // Field separator so ("ab","c") and ("a","bc") differ.
    state_ ^= 0xff;
    state_ *= 0x100000001b3ULL;
    return *this;
  }
  Fingerprint& add(std::uint64_t v) { return add(std::to_string(v)); }
  Fingerprint& add(std::int64_t v) { return add(std::to_string(v)); }
  Fingerprint& add(int v) { return add(static_cast<std::int64_t>(v)); }
  Fingerprint& add(double v) { return add(std::bit_cast<std::uint64_t>(v)); }

  std::uint64_t value() const noexcept { return state_; }
  std::string hex() const { return fmt::format("{:016x}", state_); }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace trajattr
