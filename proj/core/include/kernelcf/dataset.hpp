#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kernelcf/types.hpp"

namespace kcf {

enum class LoadFormat { tsv, csv, ml_delim };

LoadFormat parse_format(std::string_view name);  // "tsv" | "csv" | "ml-delim"

// Implicit-feedback matrix in CSR-like form. Rows are users holding sorted,
// de-duplicated item indices. Ids map to dense indices in first-seen order.
struct InteractionDataset {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::vector<std::uint32_t>> rows;
  std::size_t n_interactions = 0;

  std::size_t num_users() const { return rows.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  std::span<const std::uint32_t> row(std::size_t u) const { return rows[u]; }

  bool has_entry(std::size_t u, std::uint32_t i) const;
  std::vector<std::uint32_t> item_frequencies() const;
  std::vector<std::uint32_t> user_degrees() const;
  std::uint64_t content_hash() const;
};

// Build from an explicit entry list (entries may repeat or arrive unsorted).
InteractionDataset dataset_from_entries(
    std::vector<std::string> user_ids, std::vector<std::string> item_ids,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& entries);

// Parse (user, item, rating [, timestamp]) records. Records below
// rating_threshold are dropped; with no threshold every record is kept.
// Malformed records raise ConfigError naming the line number.
InteractionDataset load_interactions(const std::string& path, LoadFormat format,
                                     std::optional<double> rating_threshold = {});

struct SplitDataset {
  InteractionDataset train;  // splits share the user/item id maps
  InteractionDataset val;
  InteractionDataset test;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

// Per-user holdout: users with fewer than min_interactions are dropped, then
// each user's entries are shuffled under a per-user keyed stream and divided
// test = max(1, round(r_test*n)), val = max(1, round(r_val*n)), train = rest.
// Items are never pruned.
SplitDataset split_per_user(const InteractionDataset& ds,
                            std::array<double, 3> ratios, std::uint64_t seed,
                            std::uint32_t min_interactions = 3);

// Flip round(x/100 * |I|) distinct random columns in every user row.
InteractionDataset inject_noise(const InteractionDataset& ds, double x_percent,
                                std::uint64_t seed);

Matrix to_dense(const InteractionDataset& ds);

// Canonical TSV (user_id<TAB>item_id<TAB>1), loadable by load_interactions.
void write_interactions(const InteractionDataset& ds, const std::string& path);

// Split directory: meta.json + users.txt + items.txt + {train,val,test}.tsv
// with internal indices. Byte-deterministic.
void write_split_dir(const SplitDataset& sp, const std::string& dir);
SplitDataset read_split_dir(const std::string& dir);

}  // namespace kcf
