#pragma once

// Internal little-endian binary readers/writers for model files. Not part of
// the public API.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "kernelcf/types.hpp"

namespace kcf::detail {

inline constexpr char kModelMagic[8] = {'K', 'C', 'F', 'M', 'D', 'L', '0', '1'};

struct BinWriter {
  std::ofstream out;
  explicit BinWriter(const std::string& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw ConfigError("cannot write model file: " + path);
  }
  void bytes(const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const double* p, std::size_t n) { bytes(p, n * 8); }
  void check(const std::string& path) {
    if (!out) throw ConfigError("write failed: " + path);
  }
};

struct BinReader {
  std::ifstream in;
  std::string path;
  explicit BinReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw ConfigError("cannot open model file: " + p);
  }
  void bytes(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw ConfigError("model file truncated or unreadable: " + path);
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  std::string str() {
    auto n = u64();
    if (n > (1ull << 32)) throw ConfigError("corrupt string length in " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void doubles(double* p, std::size_t n) { bytes(p, n * 8); }
};

inline void write_magic(BinWriter& w, std::uint32_t kind) {
  w.bytes(kModelMagic, 8);
  w.u32(kind);
}

inline std::uint32_t read_magic(BinReader& r) {
  char m[8];
  r.bytes(m, 8);
  if (std::memcmp(m, kModelMagic, 8) != 0)
    throw ConfigError("not a model file (bad magic): " + r.path);
  return r.u32();
}

inline void write_string_list(BinWriter& w, const std::vector<std::string>& v) {
  w.u64(v.size());
  for (const auto& s : v) w.str(s);
}

inline std::vector<std::string> read_string_list(BinReader& r) {
  auto n = r.u64();
  std::vector<std::string> v;
  v.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(r.str());
  return v;
}

}  // namespace kcf::detail
