#include "kernelcf/rng.hpp"

#include <cstdio>
#include <unordered_set>

namespace kcf {

std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n <= 1) return 0;
  // rejection sampling on the top of the range keeps this unbiased
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

double RngStream::next_normal() {
  double u1 = next_open01();
  double u2 = next_open01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

std::vector<std::uint32_t> RngStream::sample_without_replacement(std::uint32_t n,
                                                                 std::uint32_t k) {
  if (k > n) k = n;
  std::vector<std::uint32_t> out;
  out.reserve(k);
  if (k * 3 >= n) {
    // dense case: shuffle the full range and take a prefix
    std::vector<std::uint32_t> all(n);
    for (std::uint32_t i = 0; i < n; ++i) all[i] = i;
    shuffle(all);
    out.assign(all.begin(), all.begin() + k);
  } else {
    std::unordered_set<std::uint32_t> seen;
    seen.reserve(k * 2);
    while (out.size() < k) {
      auto v = static_cast<std::uint32_t>(next_below(n));
      if (seen.insert(v).second) out.push_back(v);
    }
  }
  return out;
}

}  // namespace kcf
