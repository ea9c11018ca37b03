#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mman/rng.hpp"
#include "mman/synthetic.hpp"
#include "mman/text.hpp"

using namespace mman;
namespace fs = std::filesystem;

namespace {

Vocab ab_vocab() {
  Vocab v;
  v.add("a");
  v.add("b");
  return v;
}

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mman_text_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Tokenize, Pads) {
  auto seq = tokenize("ab", ab_vocab(), 4);
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{2, 3, 0, 0}));
  EXPECT_EQ(seq.true_length, 2u);
}

TEST(Tokenize, Truncates) {
  Vocab v = ab_vocab();
  v.add("c");
  auto seq = tokenize("abc", v, 2);
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(seq.true_length, 2u);
}

TEST(Tokenize, EmptyBecomesUnk) {
  auto seq = tokenize("", ab_vocab(), 3);
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{1, 0, 0}));
  EXPECT_EQ(seq.true_length, 1u);
}

TEST(Tokenize, UnknownCharsMapToUnk) {
  auto seq = tokenize("axb", ab_vocab(), 3);
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{2, 1, 3}));
}

TEST(Tokenize, MultibyteCharactersAreOneToken) {
  Vocab v;
  v.add("中");
  v.add("文");
  auto seq = tokenize("中文", v, 4);
  EXPECT_EQ(seq.true_length, 2u);
  EXPECT_EQ(seq.ids[0], 2u);
  EXPECT_EQ(seq.ids[1], 3u);
}

TEST(Tokenize, LengthAlwaysMax) {
  Vocab v = ab_vocab();
  for (std::size_t n : {1, 3, 16}) {
    for (const char* text : {"", "a", "abababababababababab"}) {
      auto seq = tokenize(text, v, n);
      EXPECT_EQ(seq.ids.size(), n);
      EXPECT_LE(seq.true_length, n);
    }
  }
  EXPECT_THROW(tokenize("a", v, 0), std::invalid_argument);
}

TEST(Vocab, ReservedIdsNeverProduced) {
  Vocab v;
  EXPECT_EQ(v.add("x"), 2u);
  EXPECT_EQ(v.add("y"), 3u);
  EXPECT_EQ(v.add("x"), 2u);
  EXPECT_EQ(v.id("zz"), Vocab::kUnk);
  EXPECT_EQ(v.token(3), "y");
  EXPECT_EQ(v.size(), 4u);
}

TEST(Vocab, SaveLoadRoundTrip) {
  auto dir = temp_dir("vocab");
  Vocab v;
  for (const char* t : {"a", "中", "Z"}) v.add(t);
  v.save(dir / "vocab.txt");
  EXPECT_EQ(slurp(dir / "vocab.txt"), "a\n中\nZ\n");
  auto back = Vocab::load(dir / "vocab.txt");
  EXPECT_EQ(back.tokens(), v.tokens());
  EXPECT_EQ(back.fingerprint(), v.fingerprint());
}

TEST(AssembleCategoryText, Concatenates) {
  CategoryRecord r{0, "n", {}, {5, 6}, {7}};
  auto seq = assemble_category_text(r, 4);
  EXPECT_EQ(seq.ids, (std::vector<std::size_t>{5, 6, 7, 0}));
  EXPECT_EQ(seq.true_length, 3u);
}

TEST(AssembleCategoryText, EmptyWordList) {
  CategoryRecord r{0, "n", {}, {5, 6}, {}};
  EXPECT_EQ(assemble_category_text(r, 4).ids, (std::vector<std::size_t>{5, 6, 0, 0}));
}

TEST(AssembleCategoryText, OverflowKeepsNamePrefix) {
  CategoryRecord r{0, "n", {}, {5, 6, 7}, {8, 9}};
  EXPECT_EQ(assemble_category_text(r, 4).ids, (std::vector<std::size_t>{5, 6, 7, 8}));
}

TEST(CategorySet, RequiresPositionalIds) {
  EXPECT_THROW(CategorySet({CategoryRecord{1, "x", {}, {}, {}}}), ParseError);
  EXPECT_THROW(CategorySet({CategoryRecord{0, "", {}, {}, {}}}), ParseError);
}

TEST(CategorySet, FileRoundTrip) {
  auto dir = temp_dir("cats");
  CategorySet cats({CategoryRecord{0, "ab", {"c", "de"}, {}, {}}, CategoryRecord{1, "x", {}, {}, {}}});
  cats.save(dir / "categories.tsv");
  EXPECT_EQ(slurp(dir / "categories.tsv"), "0\tab\tc de\n1\tx\t\n");
  auto back = CategorySet::load(dir / "categories.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].product_words, (std::vector<std::string>{"c", "de"}));
  EXPECT_EQ(back.fingerprint(), cats.fingerprint());
}

TEST(CategorySet, TokenizeWithVocab) {
  Vocab v;
  for (const char* t : {"a", "b", "c"}) v.add(t);
  CategorySet cats({CategoryRecord{0, "ab", {"c", "cq"}, {}, {}}});
  cats.tokenize_with(v);
  EXPECT_EQ(cats[0].name_tokens, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(cats[0].product_word_tokens, (std::vector<std::size_t>{4, 4, 1}));
}

TEST(Dataset, FileRoundTripAndErrors) {
  auto dir = temp_dir("data");
  std::vector<RawExample> raw{{"ab", {0}}, {"中b", {0, 2}}};
  save_dataset(dir / "d.tsv", raw);
  EXPECT_EQ(slurp(dir / "d.tsv"), "ab\t0\n中b\t0,2\n");
  auto back = load_dataset(dir / "d.tsv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].label_ids, (std::vector<std::size_t>{0, 2}));

  std::ofstream(dir / "bad.tsv") << "no tab here\n";
  try {
    load_dataset(dir / "bad.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.tsv:1"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(dir / "missing.tsv"), ParseError);
}

TEST(Dataset, PrepareExpandsLabels) {
  std::vector<RawExample> raw{{"ab", {0, 2}}};
  auto prepared = prepare_examples(raw, ab_vocab(), 3, 4);
  EXPECT_EQ(prepared[0].labels, (std::vector<double>{1, 0, 1}));
  EXPECT_EQ(prepared[0].query.ids, (std::vector<std::size_t>{2, 3, 0, 0}));
  std::vector<RawExample> out_of_range{{"a", {3}}};
  EXPECT_THROW(prepare_examples(out_of_range, ab_vocab(), 3, 4), ParseError);
}

TEST(CdfFilter, WorkedExample) {
  auto kept = filter_labels_by_cdf({{0, 50}, {1, 30}, {2, 15}, {3, 5}}, 0.9);
  EXPECT_EQ(kept, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(CdfFilter, SingleCategory) {
  for (double t : {0.01, 0.5, 1.0}) EXPECT_EQ(filter_labels_by_cdf({{4, 7}}, t), (std::vector<std::size_t>{4}));
}

TEST(CdfFilter, UniformTenKeepsNine) {
  std::map<std::size_t, double> counts;
  for (std::size_t i = 0; i < 10; ++i) counts[i] = 1.0;
  EXPECT_EQ(filter_labels_by_cdf(counts, 0.9).size(), 9u);
}

TEST(CdfFilter, ThresholdOneKeepsEveryPositive) {
  auto kept = filter_labels_by_cdf({{0, 3}, {1, 0}, {2, 1}, {3, 9}}, 1.0);
  std::sort(kept.begin(), kept.end());
  EXPECT_EQ(kept, (std::vector<std::size_t>{0, 2, 3}));
}

TEST(CdfFilter, Errors) {
  EXPECT_THROW(filter_labels_by_cdf({{0, 0}, {1, 0}}, 0.9), std::invalid_argument);
  EXPECT_THROW(filter_labels_by_cdf({{0, -1}, {1, 3}}, 0.9), std::invalid_argument);
  EXPECT_THROW(filter_labels_by_cdf({{0, 1}}, 0.0), std::invalid_argument);
  EXPECT_THROW(filter_labels_by_cdf({{0, 1}}, 1.5), std::invalid_argument);
}

TEST(CdfFilter, MassAndMinimality) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<std::size_t, double> counts;
    const std::size_t n = 1 + rng.below(12);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += counts[i] = static_cast<double>(rng.below(50));
    if (total == 0) continue;
    const double threshold = 0.05 + 0.95 * rng.uniform();
    auto kept = filter_labels_by_cdf(counts, threshold);
    double mass = 0;
    for (auto id : kept) mass += counts[id] / total;
    EXPECT_GE(mass, threshold - 1e-12);
    EXPECT_LT(mass - counts[kept.back()] / total, threshold);
    for (std::size_t i = 1; i < kept.size(); ++i) EXPECT_GE(counts[kept[i - 1]], counts[kept[i]]);
  }
}

TEST(Synthetic, DeterministicUnderSeed) {
  SyntheticConfig config;
  config.seed = 7;
  auto a = generate_synthetic(config);
  auto b = generate_synthetic(config);
  auto dir = temp_dir("synth");
  save_dataset(dir / "a.tsv", a.train);
  save_dataset(dir / "b.tsv", b.train);
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));
  config.seed = 8;
  save_dataset(dir / "c.tsv", generate_synthetic(config).train);
  EXPECT_NE(slurp(dir / "a.tsv"), slurp(dir / "c.tsv"));
}

TEST(Synthetic, CoreTokensAreDisjoint) {
  auto data = generate_synthetic(SyntheticConfig{});
  std::set<std::size_t> seen;
  for (const auto& core : data.core_tokens) {
    EXPECT_GE(core.size(), 2u);
    for (auto t : core) EXPECT_TRUE(seen.insert(t).second) << "token " << t << " shared";
  }
}

TEST(Synthetic, EveryExampleHasALabel) {
  auto data = generate_synthetic(SyntheticConfig{});
  EXPECT_EQ(data.train.size(), 2000u);
  EXPECT_EQ(data.test.size(), 400u);
  std::size_t multi = 0;
  for (const auto& e : data.train) {
    ASSERT_FALSE(e.label_ids.empty());
    multi += e.label_ids.size() > 1;
  }
  EXPECT_GT(multi, 0u);
}

TEST(Synthetic, ZeroExponentIsUniform) {
  auto counts = power_law_counts(7, 1000, 0.0);
  auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1u);

  SyntheticConfig config;
  config.tail_exponent = 0.0;
  config.multi_label_fraction = 0.0;
  std::vector<std::size_t> primaries(config.num_categories, 0);
  for (const auto& e : generate_synthetic(config).train) ++primaries[e.label_ids[0]];
  auto [plo, phi] = std::minmax_element(primaries.begin(), primaries.end());
  EXPECT_LE(*phi - *plo, 1u);
}

TEST(Synthetic, RankFrequencySlope) {
  SyntheticConfig config;
  config.num_categories = 10;
  config.tail_exponent = 1.0;
  auto data = generate_synthetic(config);
  std::vector<double> counts(10, 0.0);
  for (const auto& e : data.train)
    for (auto id : e.label_ids) counts[id] += 1;
  std::sort(counts.rbegin(), counts.rend());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t r = 0; r < 10; ++r) {
    const double x = std::log(static_cast<double>(r + 1)), y = std::log(counts[r]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (10 * sxy - sx * sy) / (10 * sxx - sx * sx);
  EXPECT_NEAR(slope, -1.0, 0.2);
}

TEST(Synthetic, VocabTooSmallIsConfigError) {
  SyntheticConfig config;
  config.num_categories = 8;
  config.vocab_size = 15;
  EXPECT_THROW(generate_synthetic(config), std::invalid_argument);
  config.num_categories = 1;
  config.vocab_size = 64;
  EXPECT_THROW(generate_synthetic(config), std::invalid_argument);
}

TEST(Synthetic, FilesRoundTripThroughLoaders) {
  auto data = generate_synthetic(SyntheticConfig{});
  auto dir = temp_dir("synth_files");
  data.categories.save(dir / "categories.tsv");
  data.vocab.save(dir / "vocab.txt");
  save_dataset(dir / "train.tsv", data.train);
  auto cats = CategorySet::load(dir / "categories.tsv");
  auto vocab = Vocab::load(dir / "vocab.txt");
  auto train = load_dataset(dir / "train.tsv");
  EXPECT_EQ(cats.fingerprint(), data.categories.fingerprint());
  EXPECT_EQ(vocab.fingerprint(), data.vocab.fingerprint());
  ASSERT_EQ(train.size(), data.train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_EQ(train[i].text, data.train[i].text);
    EXPECT_EQ(train[i].label_ids, data.train[i].label_ids);
  }
}

// Learns each token's majority label from the training split, then predicts
// the single category with the most votes.
TEST(Synthetic, CleanDataIsSeparableByMajorityToken) {
  SyntheticConfig config;
  config.noise = 0.0;
  auto data = generate_synthetic(config);
  std::map<std::string, std::vector<std::size_t>> votes;
  for (const auto& e : data.train)
    for (const auto& ch : split_chars(e.text)) {
      auto& v = votes[ch];
      v.resize(config.num_categories);
      for (auto id : e.label_ids) ++v[id];
    }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& e : data.test) {
    std::vector<std::size_t> tally(config.num_categories, 0);
    for (const auto& ch : split_chars(e.text)) {
      auto it = votes.find(ch);
      if (it == votes.end()) continue;
      ++tally[static_cast<std::size_t>(std::max_element(it->second.begin(), it->second.end()) - it->second.begin())];
    }
    const auto guess = static_cast<std::size_t>(std::max_element(tally.begin(), tally.end()) - tally.begin());
    const bool hit = std::find(e.label_ids.begin(), e.label_ids.end(), guess) != e.label_ids.end();
    tp += hit;
    fp += !hit;
    fn += e.label_ids.size() - hit;
  }
  const double f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  EXPECT_GT(f1, 0.8);
}
