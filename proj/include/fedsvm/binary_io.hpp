#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "fedsvm/error.hpp"

// Little/big-endian primitives shared by the checkpoint, dataset and IDX codecs.
namespace fedsvm::binary {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(bytes, 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(bytes, 8);
}

inline void write_f64_le(std::ostream& out, double v) {
  write_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void read_exact(std::istream& in, char* dst, std::size_t n,
                       std::string_view what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string(what) + ": truncated input");
  }
}

inline std::uint32_t read_u32_le(std::istream& in, std::string_view what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint32_t read_u32_be(std::istream& in, std::string_view what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) |
         static_cast<std::uint32_t>(b[3]);
}

inline std::uint64_t read_u64_le(std::istream& in, std::string_view what) {
  unsigned char b[8];
  read_exact(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double read_f64_le(std::istream& in, std::string_view what) {
  return std::bit_cast<double>(read_u64_le(in, what));
}

inline void expect_magic(std::istream& in, std::string_view magic,
                         std::string_view what) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), what);
  if (got != magic) {
    throw FormatError(std::string(what) + ": bad magic, expected '" +
                      std::string(magic) + "'");
  }
}

}  // namespace fedsvm::binary
