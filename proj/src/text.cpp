#include "mman/text.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mman {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::size_t parse_id(std::string_view field, const std::filesystem::path& path, std::size_t line_no) {
  if (field.empty() || !std::all_of(field.begin(), field.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected a category id, got '" +
                     std::string(field) + "'");
  }
  return std::stoul(std::string(field));
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::size_t> char_ids(std::string_view text, const Vocab& vocab) {
  std::vector<std::size_t> ids;
  for (const auto& ch : split_chars(text)) ids.push_back(vocab.id(ch));
  return ids;
}

}  // namespace

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0 && lead < 0xF8) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = lead < 0xF0 ? 3 : 1;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::size_t Vocab::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const std::size_t id = tokens_.size() + kReserved;
  ids_.emplace(token, id);
  tokens_.push_back(token);
  return id;
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  static const std::string pad = "<pad>";
  static const std::string unk = "<unk>";
  if (id == kPad) return pad;
  if (id == kUnk) return unk;
  return tokens_.at(id - kReserved);
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tokens_) {
    fnv_mix(h, t);
    fnv_mix(h, "\n");
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  auto out = open_output(path);
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  Vocab vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty vocabulary entry");
    if (vocab.contains(line)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": duplicate token '" + line + "'");
    }
    vocab.add(line);
  }
  return vocab;
}

TokenSequence pad_ids(std::vector<std::size_t> ids, std::size_t max_length) {
  if (max_length == 0) throw std::invalid_argument("max_length must be at least 1");
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  TokenSequence seq;
  seq.true_length = std::min(ids.size(), max_length);
  ids.resize(max_length, Vocab::kPad);
  seq.ids = std::move(ids);
  return seq;
}

TokenSequence tokenize(std::string_view text, const Vocab& vocab, std::size_t max_length) {
  return pad_ids(char_ids(text, vocab), max_length);
}

TokenSequence assemble_category_text(const CategoryRecord& record, std::size_t max_length) {
  std::vector<std::size_t> ids = record.name_tokens;
  ids.insert(ids.end(), record.product_word_tokens.begin(), record.product_word_tokens.end());
  return pad_ids(std::move(ids), max_length);
}

CategorySet::CategorySet(std::vector<CategoryRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (records_[i].category_id != i) {
      throw ParseError("category ids must be 0..N-1 in order; position " + std::to_string(i) + " holds id " +
                       std::to_string(records_[i].category_id));
    }
    if (records_[i].name.empty() && records_[i].name_tokens.empty()) {
      throw ParseError("category " + std::to_string(i) + " has an empty name");
    }
  }
}

void CategorySet::tokenize_with(const Vocab& vocab) {
  for (auto& r : records_) {
    r.name_tokens = char_ids(r.name, vocab);
    r.product_word_tokens.clear();
    for (const auto& w : r.product_words) {
      auto ids = char_ids(w, vocab);
      r.product_word_tokens.insert(r.product_word_tokens.end(), ids.begin(), ids.end());
    }
  }
}

std::vector<TokenSequence> CategorySet::assemble(std::size_t max_length) const {
  std::vector<TokenSequence> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(assemble_category_text(r, max_length));
  return out;
}

std::uint64_t CategorySet::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& r : records_) {
    fnv_mix(h, std::to_string(r.category_id));
    fnv_mix(h, "\t");
    fnv_mix(h, r.name);
    for (const auto& w : r.product_words) {
      fnv_mix(h, "\t");
      fnv_mix(h, w);
    }
    fnv_mix(h, "\n");
  }
  return h;
}

void CategorySet::save(const std::filesystem::path& path) const {
  auto out = open_output(path);
  for (const auto& r : records_) {
    out << r.category_id << '\t' << r.name << '\t';
    for (std::size_t i = 0; i < r.product_words.size(); ++i) {
      if (i) out << ' ';
      out << r.product_words[i];
    }
    out << '\n';
  }
}

CategorySet CategorySet::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<CategoryRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                       std::to_string(fields.size()));
    }
    CategoryRecord r;
    r.category_id = parse_id(fields[0], path, line_no);
    r.name = std::string(fields[1]);
    if (r.name.empty()) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": empty category name");
    for (auto w : split(fields[2], ' ')) {
      if (!w.empty()) r.product_words.emplace_back(w);
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw ParseError(path.string() + ": no categories");
  try {
    return CategorySet(std::move(records));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> filter_labels_by_cdf(const std::map<std::size_t, double>& click_counts, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("CDF threshold must lie in (0, 1], got " + std::to_string(threshold));
  }
  double total = 0.0;
  std::vector<std::pair<std::size_t, double>> ranked;
  for (auto [id, count] : click_counts) {
    if (count < 0.0) throw std::invalid_argument("negative click count for category " + std::to_string(id));
    total += count;
    if (count > 0.0) ranked.emplace_back(id, count);
  }
  if (total <= 0.0) throw std::invalid_argument("click counts are all zero; nothing to filter");
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  // Compare mass in count space so that e.g. 9 x 0.1 reaches 0.9 exactly.
  const double needed = threshold * total * (1.0 - 1e-12);
  std::vector<std::size_t> kept;
  double cumulative = 0.0;
  for (auto [id, count] : ranked) {
    kept.push_back(id);
    cumulative += count;
    if (cumulative >= needed) break;
  }
  return kept;
}

std::vector<RawExample> load_dataset(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<RawExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing tab before label ids");
    }
    RawExample ex;
    ex.text = line.substr(0, tab);
    for (auto field : split(std::string_view(line).substr(tab + 1), ',')) {
      ex.label_ids.push_back(parse_id(field, path, line_no));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<RawExample>& examples) {
  auto out = open_output(path);
  for (const auto& ex : examples) {
    out << ex.text << '\t';
    for (std::size_t i = 0; i < ex.label_ids.size(); ++i) {
      if (i) out << ',';
      out << ex.label_ids[i];
    }
    out << '\n';
  }
}

std::vector<LabeledQuery> prepare_examples(const std::vector<RawExample>& raw, const Vocab& vocab,
                                           std::size_t num_categories, std::size_t max_length) {
  std::vector<LabeledQuery> out;
  out.reserve(raw.size());
  for (std::size_t n = 0; n < raw.size(); ++n) {
    LabeledQuery q;
    q.text = raw[n].text;
    q.query = tokenize(raw[n].text, vocab, max_length);
    q.labels.assign(num_categories, 0.0);
    for (auto id : raw[n].label_ids) {
      if (id >= num_categories) {
        throw ParseError("example " + std::to_string(n + 1) + " has label " + std::to_string(id) +
                         " but only " + std::to_string(num_categories) + " categories exist");
      }
      q.labels[id] = 1.0;
    }
    out.push_back(std::move(q));
  }
  return out;
}

Vocab build_vocab(const std::vector<RawExample>& examples, const CategorySet& categories) {
  Vocab vocab;
  for (const auto& r : categories.records()) {
    for (const auto& ch : split_chars(r.name)) vocab.add(ch);
    for (const auto& w : r.product_words) {
      for (const auto& ch : split_chars(w)) vocab.add(ch);
    }
  }
  for (const auto& ex : examples) {
    for (const auto& ch : split_chars(ex.text)) vocab.add(ch);
  }
  return vocab;
}

}  // namespace mman
