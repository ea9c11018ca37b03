#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mman/text.hpp"

namespace mman {

/// Knobs for the synthetic intent dataset.
///
/// Every category owns a disjoint set of core characters. Its name is the
/// first two of them and its product words are pairs of the rest. A query is
/// a short string drawn mostly from its labels' core characters, with a
/// `noise` share of characters from a pool that no category owns, so labels
/// are always recoverable from the text. Per-category query counts follow a
/// rank^-tail_exponent power law.
struct SyntheticConfig {
  std::size_t num_categories = 8;
  std::size_t vocab_size = 64;
  std::size_t core_tokens_per_category = 4;
  std::size_t queries_per_category = 250;
  double test_fraction = 0.2;
  double tail_exponent = 0.5;
  double multi_label_fraction = 0.1;
  double noise = 0.2;
  std::size_t min_query_length = 2;
  std::size_t max_query_length = 8;
  double cdf_threshold = 0.9;
  std::uint64_t seed = 42;

  void validate() const;
};

struct SyntheticDataset {
  CategorySet categories;
  Vocab vocab;
  std::vector<RawExample> train;
  std::vector<RawExample> test;
  /// Core character ids of each category, for inspection and tests.
  std::vector<std::vector<std::size_t>> core_tokens;
};

/// Integer counts proportional to rank^-exponent summing to `total`
/// (largest-remainder rounding, every rank gets at least one when possible).
std::vector<std::size_t> power_law_counts(std::size_t ranks, std::size_t total, double exponent);

/// The k-th character of the synthetic alphabet: a-z, A-Z, 0-9, then CJK
/// ideographs from U+4E00.
std::string synthetic_char(std::size_t k);

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

}  // namespace mman
