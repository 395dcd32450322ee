#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tkg {

/// 64-bit FNV-1a. Used for config fingerprints embedded in artifacts.
constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 14695981039346656037ULL) {
  std::uint64_t h = seed;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value);

/// Hash of a file's bytes, as hex. Throws DataError if unreadable.
std::string file_hash(const std::string& path);

}  // namespace tkg
