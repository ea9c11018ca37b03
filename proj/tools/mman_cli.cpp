// mman_cli gen|train|eval|predict
//
// Data directories hold train.tsv, test.tsv, categories.tsv and vocab.txt as
// written by `gen`; each path can be overridden individually.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mman/ablation.hpp"
#include "mman/checkpoint.hpp"
#include "mman/run_config.hpp"
#include "mman/synthetic.hpp"
#include "mman/trainer.hpp"

namespace fs = std::filesystem;
using namespace mman;

namespace {

struct DataPaths {
  std::string dir;
  std::string train, test, categories, vocab;

  void add_flags(CLI::App* app) {
    app->add_option("--data", dir, "directory written by `gen`");
    app->add_option("--train", train, "training set (default DATA/train.tsv)");
    app->add_option("--test", test, "held-out set (default DATA/test.tsv)");
    app->add_option("--category-file", categories, "category file (default DATA/categories.tsv)");
    app->add_option("--vocab", vocab, "vocabulary file (default DATA/vocab.txt)");
  }

  fs::path resolve(const std::string& explicit_path, const char* file, const char* what) const {
    fs::path p = explicit_path.empty() ? (dir.empty() ? fs::path() : fs::path(dir) / file) : fs::path(explicit_path);
    if (p.empty()) throw std::runtime_error(std::string("no ") + what + " given; pass --data or the file flag");
    if (!fs::is_regular_file(p)) throw std::runtime_error(std::string(what) + " not found: " + p.string());
    return p;
  }
  fs::path train_path() const { return resolve(train, "train.tsv", "training set"); }
  fs::path test_path() const { return resolve(test, "test.tsv", "test set"); }
  fs::path categories_path() const { return resolve(categories, "categories.tsv", "category file"); }
  fs::path vocab_path() const { return resolve(vocab, "vocab.txt", "vocabulary file"); }
};

void add_run_flags(CLI::App* app, RunConfig& c) {
  auto pair = [](Pair& p) {
    return [&p](const std::string& v) {
      auto comma = v.find(',');
      if (comma == std::string::npos) throw CLI::ValidationError("expected 'a,b', got '" + v + "'");
      p = {std::stoul(v.substr(0, comma)), std::stoul(v.substr(comma + 1))};
    };
  };
  app->add_option("--dim", c.dim, "embedding width d")->capture_default_str();
  app->add_option("--query-length", c.query_length, "query L_max")->capture_default_str();
  app->add_option("--category-length", c.category_length, "category L_max")->capture_default_str();
  app->add_option("--layers", c.encoder_layers, "encoder layers")->capture_default_str();
  app->add_option("--heads", c.heads, "attention heads")->capture_default_str();
  app->add_option("--ff-width", c.ff_width, "feed-forward width (0 = 4d)")->capture_default_str();
  app->add_option("--filters", c.conv_filters, "conv filters per block")->capture_default_str();
  app->add_option("--conv-blocks", c.conv_blocks, "conv/pool blocks")->capture_default_str();
  app->add_option_function<std::string>("--conv-window", pair(c.conv_window), "conv window h,w (default 3,3)");
  app->add_option_function<std::string>("--conv-stride", pair(c.conv_stride), "conv stride h,w (default 1,1)");
  app->add_option_function<std::string>("--pool-window", pair(c.pool_window), "pool window h,w (default 2,2)");
  app->add_option_function<std::string>("--pool-stride", pair(c.pool_stride), "pool stride h,w (default 2,2)");
  app->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "mini-batch size")->capture_default_str();
  app->add_option("--epochs", c.epochs, "training epochs")->capture_default_str();
  app->add_option("--threshold", c.threshold, "decision threshold on sigmoid(logit)")->capture_default_str();
  app->add_option("--seed", c.seed, "initialisation and shuffling seed")->capture_default_str();
  app->add_option("--workers", c.workers, "data-parallel gradient workers")->capture_default_str();
  app->add_option_function<std::string>(
      "--variant", [&c](const std::string& v) { c.variant = parse_variant(v); },
      "full, no_self, no_char or no_semantic");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string commented(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  for (std::string line; std::getline(in, line);) out += "# " + line + "\n";
  return out;
}

struct LoadedData {
  Vocab vocab;
  CategorySet categories;
};

LoadedData load_label_space(const DataPaths& paths) {
  LoadedData d;
  d.categories = CategorySet::load(paths.categories_path());
  d.vocab = Vocab::load(paths.vocab_path());
  d.categories.tokenize_with(d.vocab);
  return d;
}

int cmd_gen(const SyntheticConfig& config, const std::string& out_dir) {
  auto data = generate_synthetic(config);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  save_dataset(dir / "train.tsv", data.train);
  save_dataset(dir / "test.tsv", data.test);
  data.categories.save(dir / "categories.tsv");
  data.vocab.save(dir / "vocab.txt");
  std::ostringstream manifest;
  manifest << "num_categories=" << config.num_categories << '\n'
           << "vocab_size=" << config.vocab_size << '\n'
           << "core_tokens_per_category=" << config.core_tokens_per_category << '\n'
           << "queries_per_category=" << config.queries_per_category << '\n'
           << "test_fraction=" << format_real(config.test_fraction) << '\n'
           << "tail_exponent=" << format_real(config.tail_exponent) << '\n'
           << "multi_label_fraction=" << format_real(config.multi_label_fraction) << '\n'
           << "noise=" << format_real(config.noise) << '\n'
           << "min_query_length=" << config.min_query_length << '\n'
           << "max_query_length=" << config.max_query_length << '\n'
           << "cdf_threshold=" << format_real(config.cdf_threshold) << '\n'
           << "seed=" << config.seed << '\n';
  write_file(dir / "config.txt", manifest.str());
  std::cout << "wrote " << data.train.size() << " train / " << data.test.size() << " test queries over "
            << data.categories.size() << " categories to " << dir.string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& run, const DataPaths& paths, const std::string& checkpoint_path,
              const std::string& log_path) {
  auto space = load_label_space(paths);
  auto raw = load_dataset(paths.train_path());
  const std::size_t labels = space.categories.size();
  auto data = prepare_examples(raw, space.vocab, labels, run.query_length);
  auto categories = space.categories.assemble(run.category_length);

  const std::string run_text = run.to_text();
  std::cout << commented(run_text) << std::flush;

  Model model(run.model_config(space.vocab.size(), labels), run.seed);
  std::ofstream log;
  if (!log_path.empty()) {
    if (fs::path(log_path).has_parent_path()) fs::create_directories(fs::path(log_path).parent_path());
    log.open(log_path, std::ios::binary);
    if (!log) throw std::runtime_error("cannot write " + log_path);
  }
  auto result = train(model, categories, data, run.train_config(), nullptr, [&](const EpochSummary& s) {
    const std::string line = std::to_string(s.epoch) + "\t" + format_real(s.mean_loss) + "\n";
    std::cout << line << std::flush;
    if (log) log << line << std::flush;
  });
  save_checkpoint(checkpoint_path, make_checkpoint(model, space.vocab, space.categories, run_text, &result.optimizer));
  return 0;
}

struct Restored {
  Checkpoint checkpoint;
  RunConfig run;
  LoadedData space;
  std::vector<TokenSequence> categories;
};

Restored restore(const std::string& checkpoint_path, const DataPaths& paths) {
  if (!fs::is_regular_file(checkpoint_path)) throw std::runtime_error("checkpoint not found: " + checkpoint_path);
  Restored r{load_checkpoint(checkpoint_path), {}, load_label_space(paths), {}};
  check_compatible(r.checkpoint, r.space.vocab, r.space.categories);
  r.run = RunConfig::from_text(r.checkpoint.run_config);
  r.categories = r.space.categories.assemble(r.checkpoint.config.category_length);
  return r;
}

int cmd_eval(const std::string& checkpoint_path, const DataPaths& paths, const std::string& split,
             const std::string& report_prefix, std::optional<double> threshold) {
  Restored r = restore(checkpoint_path, paths);
  if (threshold) r.run.threshold = *threshold;
  const fs::path data_path = split == "train" ? paths.train_path() : paths.test_path();
  auto data = prepare_examples(load_dataset(data_path), r.space.vocab, r.space.categories.size(),
                               r.checkpoint.config.query_length);
  Model model = restore_model(r.checkpoint);
  auto report = evaluate(model, r.categories, data, r.run.threshold);
  const std::string run_text = r.run.to_text() + "data=" + data_path.string() + "\n";
  const std::string table = format_report_table(report, run_text);
  std::cout << table;
  if (!report_prefix.empty()) {
    write_file(report_prefix + ".txt", table);
    write_file(report_prefix + ".tsv", commented(run_text) + format_report_records(report));
  }
  return 0;
}

int cmd_ablation(const RunConfig& run, const DataPaths& paths, const std::string& report_prefix) {
  auto space = load_label_space(paths);
  const std::size_t labels = space.categories.size();
  auto train_set = prepare_examples(load_dataset(paths.train_path()), space.vocab, labels, run.query_length);
  auto test_set = prepare_examples(load_dataset(paths.test_path()), space.vocab, labels, run.query_length);
  auto categories = space.categories.assemble(run.category_length);
  auto rows = run_ablation_suite(run.model_config(space.vocab.size(), labels), run.seed, run.train_config(),
                                 categories, train_set, test_set);
  const std::string table = commented(run.to_text()) + format_ablation_table(rows);
  std::cout << table;
  if (!report_prefix.empty()) {
    write_file(report_prefix + ".ablation.txt", table);
    std::string records = commented(run.to_text());
    for (const auto& row : rows) {
      std::istringstream in(format_report_records(row.report));
      for (std::string line; std::getline(in, line);) records += std::string(to_string(row.variant)) + "\t" + line + "\n";
    }
    write_file(report_prefix + ".ablation.tsv", records);
  }
  return 0;
}

int cmd_predict(const std::string& checkpoint_path, const DataPaths& paths, const std::string& query,
                std::optional<double> threshold) {
  Restored r = restore(checkpoint_path, paths);
  if (threshold) r.run.threshold = *threshold;
  Model model = restore_model(r.checkpoint);
  std::vector<TokenSequence> queries{tokenize(query, r.space.vocab, r.checkpoint.config.query_length)};
  auto logits = predict_logits(model, r.categories, queries).front();
  auto chosen = decide(logits, r.run.threshold);

  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  std::cout << "# threshold=" << format_real(r.run.threshold) << "\n";
  std::cout << "# rank\tid\tname\tprobability\tpredicted\n";
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t c = order[k];
    char prob[32];
    std::snprintf(prob, sizeof prob, "%.6f", 1.0 / (1.0 + std::exp(-logits[c])));
    std::cout << k + 1 << '\t' << c << '\t' << r.space.categories[c].name << '\t' << prob << '\t'
              << (chosen[c] ? "*" : "-") << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-granularity matching attention network for multi-label query intent"};
  app.require_subcommand(1);

  SyntheticConfig synth;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "write a synthetic separable dataset");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--categories", synth.num_categories, "number of categories")->capture_default_str();
  gen->add_option("--vocab-size", synth.vocab_size, "alphabet size")->capture_default_str();
  gen->add_option("--core-tokens", synth.core_tokens_per_category, "core characters per category")
      ->capture_default_str();
  gen->add_option("--queries-per-category", synth.queries_per_category, "mean training queries per category")
      ->capture_default_str();
  gen->add_option("--test-fraction", synth.test_fraction, "test size relative to train")->capture_default_str();
  gen->add_option("--tail-exponent", synth.tail_exponent, "power-law exponent of category frequency")
      ->capture_default_str();
  gen->add_option("--multi-label-fraction", synth.multi_label_fraction, "share of queries with a second label")
      ->capture_default_str();
  gen->add_option("--noise", synth.noise, "share of characters drawn from the noise pool")->capture_default_str();
  gen->add_option("--min-query-length", synth.min_query_length)->capture_default_str();
  gen->add_option("--max-query-length", synth.max_query_length)->capture_default_str();
  gen->add_option("--cdf-threshold", synth.cdf_threshold, "click CDF cut for labels")->capture_default_str();
  gen->add_option("--seed", synth.seed)->capture_default_str();

  RunConfig train_run;
  DataPaths train_paths;
  std::string checkpoint_out, log_out;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_paths.add_flags(train_cmd);
  train_cmd->add_option("--checkpoint", checkpoint_out, "checkpoint to write")->required();
  train_cmd->add_option("--log", log_out, "per-epoch loss log (epoch<TAB>mean_loss)");
  add_run_flags(train_cmd, train_run);

  RunConfig eval_run;
  DataPaths eval_paths;
  std::string eval_checkpoint, split = "test", report_prefix;
  std::optional<double> eval_threshold;
  bool ablation = false;
  auto* eval = app.add_subcommand("eval", "score a checkpoint, or run the ablation suite with --ablation");
  eval_paths.add_flags(eval);
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate");
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
  eval->add_option("--report", report_prefix, "write PREFIX.txt (table) and PREFIX.tsv (records)");
  eval->add_flag("--ablation", ablation, "train and score full, no_self, no_char and no_semantic from scratch");
  auto* eval_run_flags = eval->add_option_group("ablation", "model and training flags used by --ablation");
  add_run_flags(eval_run_flags, eval_run);

  DataPaths predict_paths;
  std::string predict_checkpoint, query;
  std::optional<double> predict_threshold;
  auto* predict = app.add_subcommand("predict", "rank every category for one query");
  predict_paths.add_flags(predict);
  predict->add_option("--checkpoint", predict_checkpoint, "checkpoint to load")->required();
  predict->add_option("--query", query, "query text (may be empty)")->required();
  predict->add_option("--threshold", predict_threshold, "override the checkpoint's decision threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(synth, gen_out);
    if (*train_cmd) return cmd_train(train_run, train_paths, checkpoint_out, log_out);
    if (*eval) {
      if (ablation) return cmd_ablation(eval_run, eval_paths, report_prefix);
      if (eval_checkpoint.empty()) throw std::runtime_error("eval needs --checkpoint (or --ablation)");
      if (eval_run_flags->count_all() > 0) {
        // Only the threshold may be overridden when scoring a checkpoint.
        if (eval_run_flags->get_option("--threshold")->count() > 0) eval_threshold = eval_run.threshold;
      }
      return cmd_eval(eval_checkpoint, eval_paths, split, report_prefix, eval_threshold);
    }
    if (*predict) return cmd_predict(predict_checkpoint, predict_paths, query, predict_threshold);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
