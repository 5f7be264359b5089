#pragma once

#include "symseg/errors.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

// Little-endian byte packing used by every binary file format in the
// project, written out explicitly so files are portable across hosts.
namespace symseg::binio {

inline std::uint32_t load_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint64_t load_u64le(const unsigned char* p) {
  return static_cast<std::uint64_t>(load_u32le(p)) |
         static_cast<std::uint64_t>(load_u32le(p + 4)) << 32;
}

inline void store_u32le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

inline void store_u64le(unsigned char* p, std::uint64_t v) {
  store_u32le(p, static_cast<std::uint32_t>(v & 0xffffffffu));
  store_u32le(p + 4, static_cast<std::uint32_t>(v >> 32));
}

inline float load_f32le(const unsigned char* p) {
  const std::uint32_t u = load_u32le(p);
  float f;
  std::memcpy(&f, &u, sizeof f);
  return f;
}

inline void store_f32le(unsigned char* p, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, sizeof u);
  store_u32le(p, u);
}

inline double load_f64le(const unsigned char* p) {
  const std::uint64_t u = load_u64le(p);
  double d;
  std::memcpy(&d, &u, sizeof d);
  return d;
}

inline void store_f64le(unsigned char* p, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, sizeof u);
  store_u64le(p, u);
}

// appenders for building a file image in memory
inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  unsigned char b[4];
  store_u32le(b, v);
  out.insert(out.end(), b, b + 4);
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  unsigned char b[8];
  store_u64le(b, v);
  out.insert(out.end(), b, b + 8);
}

inline void put_f64(std::vector<unsigned char>& out, double d) {
  unsigned char b[8];
  store_f64le(b, d);
  out.insert(out.end(), b, b + 8);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(size);
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw DataError("short read on " + path);
  return bytes;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write on " + path);
}

}  // namespace symseg::binio
