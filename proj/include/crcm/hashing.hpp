#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "crcm/rng.hpp"

namespace crcm {

// Seeded FNV-1a over the bytes, finished with a strong mix.
inline uint64_t hash64(std::string_view s, uint64_t seed = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

inline std::string to_hex(uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[x & 0xf];
    x >>= 4;
  }
  return out;
}

// 128-bit content fingerprint as hex, for cache keys and file versions.
inline std::string fingerprint_hex(std::string_view s) {
  return to_hex(hash64(s, 0x5bd1e995)) + to_hex(hash64(s, 0xc2b2ae35));
}

}  // namespace crcm
