#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kernelcf/dataset.hpp"

namespace kcf {

// Compact synthetic training set produced by distillation (or by a sampler
// when a portable artifact is wanted). Rows are binary pseudo-users over the
// originating item universe.
struct SampledSummary {
  struct Meta {
    std::string source_hash;  // content hash of the distilled train split
    std::uint32_t mu = 0;
    std::uint32_t gamma = 0;
    double tau = 0;
    double lambda = 0;   // inner regularizer at the checkpoint
    double lambda2 = 0;
    std::uint64_t seed = 0;
    std::uint32_t outer_iterations = 0;
  };

  std::vector<std::vector<std::uint32_t>> rows;  // sorted item indices
  std::vector<std::string> item_ids;
  Meta meta;

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }
};

// One JSON header line (version, dims, entry-count checksum, provenance,
// item universe), then one "row<TAB>col" line per 1-entry, lines sorted
// lexicographically. Byte-deterministic; read validates version and counts.
void write_summary(const SampledSummary& s, const std::string& path);
SampledSummary read_summary(const std::string& path);

// View the summary as a trainable dataset (synthetic user ids).
InteractionDataset summary_to_dataset(const SampledSummary& s);

}  // namespace kcf
