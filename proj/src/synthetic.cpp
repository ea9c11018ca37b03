#include "mman/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mman/rng.hpp"

namespace mman {

void SyntheticConfig::validate() const {
  if (num_categories < 2) {
    throw std::invalid_argument("synthetic data needs at least 2 categories, got " + std::to_string(num_categories));
  }
  if (vocab_size < 2 * num_categories) {
    throw std::invalid_argument("vocab size " + std::to_string(vocab_size) + " cannot give each of " +
                                std::to_string(num_categories) + " categories 2 disjoint tokens (need >= " +
                                std::to_string(2 * num_categories) + ")");
  }
  if (core_tokens_per_category < 2) throw std::invalid_argument("core_tokens_per_category must be >= 2");
  if (queries_per_category == 0) throw std::invalid_argument("queries_per_category must be positive");
  if (min_query_length == 0 || min_query_length > max_query_length) {
    throw std::invalid_argument("query length range must satisfy 1 <= min <= max");
  }
  if (!(test_fraction >= 0.0) || !(noise >= 0.0 && noise < 1.0) ||
      !(multi_label_fraction >= 0.0 && multi_label_fraction <= 1.0) || !(tail_exponent >= 0.0)) {
    throw std::invalid_argument("synthetic fractions out of range");
  }
}

std::vector<std::size_t> power_law_counts(std::size_t ranks, std::size_t total, double exponent) {
  std::vector<double> weights(ranks);
  for (std::size_t r = 0; r < ranks; ++r) weights[r] = std::pow(static_cast<double>(r + 1), -exponent);
  const double norm = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(ranks);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t r = 0; r < ranks; ++r) {
    const double ideal = static_cast<double>(total) * weights[r] / norm;
    counts[r] = static_cast<std::size_t>(std::floor(ideal));
    assigned += counts[r];
    remainders.emplace_back(ideal - std::floor(ideal), r);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i % ranks].second];
  if (total >= ranks) {
    // Lift empty tail ranks by borrowing from the head.
    for (std::size_t r = ranks; r-- > 0;) {
      if (counts[r] > 0) continue;
      auto donor = std::max_element(counts.begin(), counts.end());
      --*donor;
      counts[r] = 1;
    }
  }
  return counts;
}

std::string synthetic_char(std::size_t k) {
  if (k < 26) return std::string(1, static_cast<char>('a' + k));
  if (k < 52) return std::string(1, static_cast<char>('A' + (k - 26)));
  if (k < 62) return std::string(1, static_cast<char>('0' + (k - 52)));
  const std::uint32_t cp = 0x4E00 + static_cast<std::uint32_t>(k - 62);
  std::string out;
  out += static_cast<char>(0xE0 | (cp >> 12));
  out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
  out += static_cast<char>(0x80 | (cp & 0x3F));
  return out;
}

namespace {

struct Generator {
  const SyntheticConfig& config;
  Rng& rng;
  const std::vector<std::vector<std::size_t>>& core;
  const std::vector<std::size_t>& noise_pool;

  RawExample make_query(std::size_t primary) {
    std::vector<std::size_t> labels{primary};
    if (rng.bernoulli(config.multi_label_fraction)) {
      std::size_t other = rng.below(config.num_categories - 1);
      if (other >= primary) ++other;
      labels.push_back(other);
    }

    // Click counts: labelled categories dominate, one unrelated category
    // picks up a few stray clicks that the CDF cut removes.
    std::map<std::size_t, double> clicks;
    clicks[labels[0]] = static_cast<double>(60 + rng.below(41));
    if (labels.size() > 1) clicks[labels[1]] = static_cast<double>(30 + rng.below(31));
    std::size_t stray = rng.below(config.num_categories);
    while (clicks.contains(stray)) stray = (stray + 1) % config.num_categories;
    clicks[stray] = static_cast<double>(1 + rng.below(5));
    std::vector<std::size_t> kept = filter_labels_by_cdf(clicks, config.cdf_threshold);

    const std::size_t span = config.max_query_length - config.min_query_length + 1;
    const std::size_t length = std::max(config.min_query_length + rng.below(span), kept.size());
    std::string text;
    for (std::size_t pos = 0; pos < length; ++pos) {
      std::size_t token;
      if (pos >= kept.size() && !noise_pool.empty() && rng.bernoulli(config.noise)) {
        token = noise_pool[rng.below(noise_pool.size())];
      } else {
        const auto& owner = core[kept[pos < kept.size() ? pos : rng.below(kept.size())]];
        token = owner[rng.below(owner.size())];
      }
      text += synthetic_char(token);
    }
    std::sort(kept.begin(), kept.end());
    return RawExample{std::move(text), std::move(kept)};
  }

  std::vector<RawExample> make_split(std::size_t total) {
    auto counts = power_law_counts(config.num_categories, total, config.tail_exponent);
    std::vector<std::size_t> primaries;
    for (std::size_t c = 0; c < counts.size(); ++c) primaries.insert(primaries.end(), counts[c], c);
    rng.shuffle(std::span<std::size_t>(primaries));
    std::vector<RawExample> out;
    out.reserve(primaries.size());
    for (auto p : primaries) out.push_back(make_query(p));
    return out;
  }
};

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t per_category =
      std::min(config.core_tokens_per_category, config.vocab_size / config.num_categories);

  std::vector<std::size_t> alphabet(config.vocab_size);
  std::iota(alphabet.begin(), alphabet.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(alphabet));

  SyntheticDataset data;
  data.core_tokens.resize(config.num_categories);
  std::vector<CategoryRecord> records;
  for (std::size_t c = 0; c < config.num_categories; ++c) {
    std::vector<std::size_t> letters(alphabet.begin() + static_cast<std::ptrdiff_t>(c * per_category),
                                     alphabet.begin() + static_cast<std::ptrdiff_t>((c + 1) * per_category));
    CategoryRecord r;
    r.category_id = c;
    r.name = synthetic_char(letters[0]) + synthetic_char(letters[1]);
    for (std::size_t i = 2; i < letters.size(); i += 2) {
      std::string word = synthetic_char(letters[i]);
      if (i + 1 < letters.size()) word += synthetic_char(letters[i + 1]);
      r.product_words.push_back(std::move(word));
    }
    records.push_back(std::move(r));
    data.core_tokens[c] = std::move(letters);
  }
  std::vector<std::size_t> noise_pool(alphabet.begin() + static_cast<std::ptrdiff_t>(config.num_categories * per_category),
                                      alphabet.end());
  std::sort(noise_pool.begin(), noise_pool.end());

  for (std::size_t k = 0; k < config.vocab_size; ++k) data.vocab.add(synthetic_char(k));
  // Core token lists are stored as vocabulary ids.
  for (auto& letters : data.core_tokens) {
    for (auto& t : letters) t += Vocab::kReserved;
  }
  std::vector<std::vector<std::size_t>> core_alphabet = data.core_tokens;
  for (auto& letters : core_alphabet) {
    for (auto& t : letters) t -= Vocab::kReserved;
  }

  data.categories = CategorySet(std::move(records));
  data.categories.tokenize_with(data.vocab);

  Generator gen{config, rng, core_alphabet, noise_pool};
  const std::size_t train_total = config.queries_per_category * config.num_categories;
  data.train = gen.make_split(train_total);
  const auto test_total =
      static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(train_total)));
  if (test_total > 0) data.test = gen.make_split(test_total);
  return data;
}

}  // namespace mman
