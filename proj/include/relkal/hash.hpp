#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace relkal::hash {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

/// FNV-1a over raw bytes; chainable through the running-hash argument.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

/// Keeps string literals on the string_view path; without this a chained
/// fnv1a("x", h) would bind the hash to the byte-count parameter above.
inline std::uint64_t fnv1a(const char* s, std::uint64_t h = kFnvOffset) {
  return fnv1a(std::string_view(s), h);
}

}  // namespace relkal::hash
