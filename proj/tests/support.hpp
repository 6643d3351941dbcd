#pragma once

// Shared synthetic-data builders for the test suite.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kernelcf/dataset.hpp"

namespace testsup {

// Dataset with explicit rows over items "i0..i{n_items-1}".
inline kcf::InteractionDataset from_rows(
    const std::vector<std::vector<std::uint32_t>>& rows, std::size_t n_items) {
  std::vector<std::string> users, items;
  for (std::size_t u = 0; u < rows.size(); ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < n_items; ++i) items.push_back("i" + std::to_string(i));
  std::vector<std::pair<std::uint32_t, std::uint32_t>> entries;
  for (std::uint32_t u = 0; u < rows.size(); ++u)
    for (auto i : rows[u]) entries.emplace_back(u, i);
  return kcf::dataset_from_entries(std::move(users), std::move(items), entries);
}

// Two-cluster taste structure: user u prefers block (u % 2) and picks
// `per_user` in-block items plus one out-of-block item. std::mt19937 keeps
// the builder independent of the library's own stream implementation.
inline kcf::InteractionDataset blocks(std::size_t n_users, std::size_t n_items,
                                      std::size_t per_user, std::uint64_t seed) {
  std::mt19937 gen(static_cast<std::uint32_t>(seed));
  std::size_t half = n_items / 2;
  std::vector<std::vector<std::uint32_t>> rows(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    std::uint32_t lo = u % 2 ? static_cast<std::uint32_t>(half) : 0;
    std::uint32_t hi = u % 2 ? static_cast<std::uint32_t>(n_items)
                             : static_cast<std::uint32_t>(half);
    std::vector<std::uint32_t> pool;
    for (std::uint32_t i = lo; i < hi; ++i) pool.push_back(i);
    std::shuffle(pool.begin(), pool.end(), gen);
    rows[u].assign(pool.begin(), pool.begin() + std::min(per_user, pool.size()));
    std::uint32_t out = u % 2 ? 0 : static_cast<std::uint32_t>(half);
    rows[u].push_back(out + static_cast<std::uint32_t>(gen() % half));
  }
  return from_rows(rows, n_items);
}

// Fresh per-test scratch directory under the build tree.
inline std::string scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kcf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testsup
