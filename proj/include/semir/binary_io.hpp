#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "semir/error.hpp"

namespace semir::binary {

// Little-endian primitives shared by every on-disk container.

template <typename T> void put(std::ostream &os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(T));
  }
  os.write(reinterpret_cast<const char *>(buf), sizeof(T));
}

template <typename T> T get(std::istream &is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char *>(buf), sizeof(T))) {
    throw FormatError("unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(buf, buf + sizeof(T));
  }
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void put_magic(std::ostream &os, std::string_view magic) { os.write(magic.data(), 4); }

inline void expect_magic(std::istream &is, std::string_view magic) {
  char buf[4];
  if (!is.read(buf, 4) || std::string_view(buf, 4) != magic) {
    throw FormatError("bad magic, expected " + std::string(magic));
  }
}

inline void put_string(std::ostream &os, std::string_view s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream &is) {
  const auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) {
    throw FormatError("string length out of range");
  }
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) {
    throw FormatError("unexpected end of file");
  }
  return s;
}

inline void expect_version(std::istream &is, std::uint32_t want) {
  const auto v = get<std::uint32_t>(is);
  if (v != want) {
    throw FormatError("unsupported version " + std::to_string(v));
  }
}

} // namespace semir::binary
