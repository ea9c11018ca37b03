#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mman {

/// Raised for malformed dataset, category or vocabulary files.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Splits UTF-8 text into code points, each returned as its byte sequence.
/// Invalid bytes are passed through one at a time.
std::vector<std::string> split_chars(std::string_view text);

/// Character vocabulary. Ids 0 and 1 are reserved for padding and unknown.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kReserved = 2;

  Vocab() = default;

  /// Returns the id of `token`, adding it if new.
  std::size_t add(const std::string& token);
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  bool contains(const std::string& token) const { return ids_.contains(token); }

  /// Total id range, reserved ids included.
  std::size_t size() const { return tokens_.size() + kReserved; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the ordered token list; identifies a vocabulary in checkpoints.
  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::size_t> ids_;
  std::vector<std::string> tokens_;
};

/// Fixed-length id sequence with the count of real tokens before padding.
struct TokenSequence {
  std::vector<std::size_t> ids;
  std::size_t true_length = 0;

  std::size_t max_length() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

/// Character-level tokenization padded or truncated to `max_length`.
/// Empty text becomes a single UNK token.
TokenSequence tokenize(std::string_view text, const Vocab& vocab, std::size_t max_length);

/// Pads or truncates raw ids to `max_length`; an empty list becomes one UNK.
TokenSequence pad_ids(std::vector<std::size_t> ids, std::size_t max_length);

struct CategoryRecord {
  std::size_t category_id = 0;
  std::string name;
  std::vector<std::string> product_words;
  std::vector<std::size_t> name_tokens;
  std::vector<std::size_t> product_word_tokens;
};

/// Name tokens then product-word tokens, padded or truncated to `max_length`.
TokenSequence assemble_category_text(const CategoryRecord& record, std::size_t max_length);

/// Ordered label space. Position in the list is the category id.
class CategorySet {
 public:
  CategorySet() = default;
  explicit CategorySet(std::vector<CategoryRecord> records);

  std::size_t size() const { return records_.size(); }
  const CategoryRecord& operator[](std::size_t i) const { return records_.at(i); }
  const std::vector<CategoryRecord>& records() const { return records_; }

  /// Re-derives the token ids of every record from its text.
  void tokenize_with(const Vocab& vocab);
  std::vector<TokenSequence> assemble(std::size_t max_length) const;

  std::uint64_t fingerprint() const;

  void save(const std::filesystem::path& path) const;
  static CategorySet load(const std::filesystem::path& path);

 private:
  std::vector<CategoryRecord> records_;
};

struct LabeledQuery {
  std::string text;
  TokenSequence query;
  std::vector<double> labels;  // 0/1, one entry per category
};

/// Keeps the most-clicked categories whose cumulative click share first
/// reaches `threshold`. Returns kept ids ordered by descending count.
std::vector<std::size_t> filter_labels_by_cdf(const std::map<std::size_t, double>& click_counts, double threshold);

// Line formats:
//   dataset:    <query>\t<id[,id...]>
//   categories: <id>\t<name>\t<word word ...>
//   vocab:      one token per line, line k (0-based) has id k + 2
struct RawExample {
  std::string text;
  std::vector<std::size_t> label_ids;
};

std::vector<RawExample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const std::vector<RawExample>& examples);

/// Tokenizes raw examples and expands label ids into 0/1 vectors.
std::vector<LabeledQuery> prepare_examples(const std::vector<RawExample>& raw, const Vocab& vocab,
                                           std::size_t num_categories, std::size_t max_length);

/// Vocabulary over every character of the given texts, in first-seen order.
Vocab build_vocab(const std::vector<RawExample>& examples, const CategorySet& categories);

}  // namespace mman
