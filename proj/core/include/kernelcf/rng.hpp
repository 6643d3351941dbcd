#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "kernelcf/types.hpp"

namespace kcf {

// Keyed deterministic random stream. Every random decision in the library
// draws from a stream keyed by (seed, operation tag, row index), so results
// never depend on thread count or iteration order. The generator itself is
// splitmix64, which is plenty for sampling duty and portable across builds
// (no reliance on libstdc++ distribution internals).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(tag);
    h = fnv1a64_u64(seed, h);
    h = fnv1a64_u64(index, h);
    state_ = h ? h : 0x9e3779b97f4a7c15ull;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform on [0,1) with 53 random bits
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0,1), safe inside logs
  double next_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // unbiased uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n);

  double next_gumbel() { return -std::log(-std::log(next_open01())); }

  // Box-Muller; consumes two uniforms per call so the stream advance is fixed
  double next_normal();

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in selection order
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

 private:
  std::uint64_t state_;
};

}  // namespace kcf
