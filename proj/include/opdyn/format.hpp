#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

namespace opdyn {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

inline std::string format_hex64(std::uint64_t value) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value, 16);
  std::string digits(buf, ptr);
  return std::string(16 - digits.size(), '0') + digits;
}

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace opdyn
