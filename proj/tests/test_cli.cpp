#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string output;
};

// Runs the CLI with stderr folded into the captured output.
Run cli(const std::string& args) {
  const std::string command = std::string(MMAN_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& s, bool skip_comments = false) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty() && !(skip_comments && line[0] == '#')) ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() { return fs::temp_directory_path() / ("mman_cli_test_" + std::to_string(getpid())); }
  static void TearDownTestSuite() { fs::remove_all(dir()); }
  static std::string data() { return (dir() / "data").string(); }
  static std::string ckpt() { return (dir() / "model.ckpt").string(); }

  static void SetUpTestSuite() {
    fs::remove_all(dir());
    auto g = cli("gen --out " + data() + " --categories 4 --queries-per-category 12 --seed 5");
    ASSERT_EQ(g.status, 0) << g.output;
    auto t = cli("train --data " + data() + " --checkpoint " + ckpt() + " --log " + (dir() / "loss.tsv").string() +
                 " --epochs 2 --dim 8 --heads 2 --layers 1 --filters 2 --conv-blocks 1 --query-length 8"
                 " --category-length 8 --lr 1e-2 --batch-size 8");
    ASSERT_EQ(t.status, 0) << t.output;
  }
};

}  // namespace

TEST_F(Cli, GenIsDeterministic) {
  const auto other = (dir() / "again").string();
  ASSERT_EQ(cli("gen --out " + other + " --categories 4 --queries-per-category 12 --seed 5").status, 0);
  for (const char* f : {"train.tsv", "test.tsv", "categories.tsv", "vocab.txt", "config.txt"})
    EXPECT_EQ(slurp(fs::path(data()) / f), slurp(fs::path(other) / f)) << f;
}

TEST_F(Cli, GenRejectsSingleCategory) {
  auto r = cli("gen --out " + (dir() / "one").string() + " --categories 1");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("categories"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainLogHasOneLinePerEpoch) {
  auto log = slurp(dir() / "loss.tsv");
  EXPECT_EQ(line_count(log), 2u) << log;
  EXPECT_EQ(log.rfind("1\t", 0), 0u) << log;
}

TEST_F(Cli, TrainWithMissingCategoryFileNamesThePath) {
  const auto missing = (dir() / "no_such_categories.tsv").string();
  auto r = cli("train --data " + data() + " --category-file " + missing + " --checkpoint " +
               (dir() / "x.ckpt").string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(dir() / "x.ckpt"));
}

TEST_F(Cli, EvalIsReproducibleAndNamesItsSettings) {
  const auto a = (dir() / "rep_a").string(), b = (dir() / "rep_b").string();
  auto ra = cli("eval --data " + data() + " --checkpoint " + ckpt() + " --report " + a);
  auto rb = cli("eval --data " + data() + " --checkpoint " + ckpt() + " --report " + b);
  ASSERT_EQ(ra.status, 0) << ra.output;
  EXPECT_EQ(ra.output, rb.output);
  EXPECT_EQ(slurp(a + ".txt"), slurp(b + ".txt"));
  EXPECT_EQ(slurp(a + ".tsv"), slurp(b + ".tsv"));
  const auto table = slurp(a + ".txt");
  for (const char* needle : {"# threshold=0.5", "macro-F1", "seed=42", "lr=0.01", "epochs=2"})
    EXPECT_NE(table.find(needle), std::string::npos) << needle << "\n" << table;
  EXPECT_NE(slurp(a + ".tsv").find("micro\t-\tf1\t"), std::string::npos);
}

TEST_F(Cli, EvalRejectsMismatchedCategoryCount) {
  const auto more = (dir() / "more").string();
  ASSERT_EQ(cli("gen --out " + more + " --categories 5 --seed 5").status, 0);
  auto r = cli("eval --data " + data() + " --category-file " + more + "/categories.tsv --checkpoint " + ckpt());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("|C|=4"), std::string::npos) << r.output;
}

TEST_F(Cli, PredictRanksEveryCategory) {
  for (const char* query : {"\"\"", "\"abc\""}) {
    auto r = cli("predict --data " + data() + " --checkpoint " + ckpt() + " --query " + query);
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_EQ(line_count(r.output, true), 4u) << r.output;
    std::istringstream in(r.output);
    double previous = 2.0;
    for (std::string line; std::getline(in, line);) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      std::string rank, id, name;
      double p;
      fields >> rank >> id >> name >> p;
      EXPECT_LE(p, previous) << r.output;
      previous = p;
    }
    EXPECT_EQ(r.output, cli("predict --data " + data() + " --checkpoint " + ckpt() + " --query " + query).output);
  }
}
