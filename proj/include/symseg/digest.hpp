#pragma once

#include <cstdint>
#include <string_view>

namespace symseg {

// FNV-1a over a byte string; used for config and architecture digests.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace symseg
