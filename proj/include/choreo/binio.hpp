#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "choreo/error.hpp"

// Little-endian primitives for the binary file formats.
namespace choreo::binio {

static_assert(sizeof(float) == 4 && sizeof(double) == 8);

template <class T>
inline void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
inline T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw DataError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

inline std::string read_magic(std::istream& is) {
  char buf[4];
  is.read(buf, 4);
  if (!is) throw DataError("unexpected end of file reading magic");
  return std::string(buf, 4);
}

}  // namespace choreo::binio
