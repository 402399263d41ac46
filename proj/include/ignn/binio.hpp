#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ignn/error.hpp"

// Little-endian primitive encoding shared by checkpoint and dataset files.
namespace ignn::io {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw Error(Errc::io, "write failed");
}

inline void write_u8(std::ostream& os, uint8_t v) { write_bytes(os, &v, 1); }

inline void write_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  write_bytes(os, b, 2);
}

inline void write_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  write_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  write_bytes(os, b, 8);
}

inline void write_i32(std::ostream& os, int32_t v) { write_u32(os, static_cast<uint32_t>(v)); }

inline void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline void write_str(std::ostream& os, const std::string& s) {
  if (s.size() > 0xffff) throw Error(Errc::invalid_argument, "string too long to serialize");
  write_u16(os, static_cast<uint16_t>(s.size()));
  write_bytes(os, s.data(), s.size());
}

inline void read_bytes(std::istream& is, void* p, size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(is.gcount()) != n)
    throw Error(Errc::data, std::string("unexpected end of file while reading ") + what);
}

inline uint8_t read_u8(std::istream& is, const char* what) {
  uint8_t v;
  read_bytes(is, &v, 1, what);
  return v;
}

inline uint16_t read_u16(std::istream& is, const char* what) {
  uint8_t b[2];
  read_bytes(is, b, 2, what);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t read_u32(std::istream& is, const char* what) {
  uint8_t b[4];
  read_bytes(is, b, 4, what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

inline uint64_t read_u64(std::istream& is, const char* what) {
  uint8_t b[8];
  read_bytes(is, b, 8, what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

inline int32_t read_i32(std::istream& is, const char* what) {
  return static_cast<int32_t>(read_u32(is, what));
}

inline double read_f64(std::istream& is, const char* what) {
  uint64_t bits = read_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string read_str(std::istream& is, const char* what) {
  const uint16_t n = read_u16(is, what);
  std::string s(n, '\0');
  if (n) read_bytes(is, s.data(), n, what);
  return s;
}

}  // namespace ignn::io
