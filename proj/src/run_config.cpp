#include "mman/run_config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

namespace mman {

ModelConfig RunConfig::model_config(std::size_t vocab_size, std::size_t num_categories) const {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.num_categories = num_categories;
  c.dim = dim;
  c.query_length = query_length;
  c.category_length = category_length;
  c.encoder_layers = encoder_layers;
  c.heads = heads;
  c.ff_width = ff_width;
  c.conv_filters = conv_filters;
  c.conv_blocks = conv_blocks;
  c.conv_window = conv_window;
  c.conv_stride = conv_stride;
  c.pool_window = pool_window;
  c.pool_stride = pool_stride;
  c.variant = variant;
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr = lr;
  t.seed = seed;
  t.workers = workers;
  t.threshold = threshold;
  return t;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  auto pair = [](Pair p) { return std::to_string(p[0]) + "," + std::to_string(p[1]); };
  out << "dim=" << dim << '\n'
      << "query_length=" << query_length << '\n'
      << "category_length=" << category_length << '\n'
      << "encoder_layers=" << encoder_layers << '\n'
      << "heads=" << heads << '\n'
      << "ff_width=" << (ff_width == 0 ? 4 * dim : ff_width) << '\n'
      << "conv_filters=" << conv_filters << '\n'
      << "conv_blocks=" << conv_blocks << '\n'
      << "conv_window=" << pair(conv_window) << '\n'
      << "conv_stride=" << pair(conv_stride) << '\n'
      << "pool_window=" << pair(pool_window) << '\n'
      << "pool_stride=" << pair(pool_stride) << '\n'
      << "lr=" << format_real(lr) << '\n'
      << "batch_size=" << batch_size << '\n'
      << "epochs=" << epochs << '\n'
      << "threshold=" << format_real(threshold) << '\n'
      << "seed=" << seed << '\n'
      << "workers=" << workers << '\n'
      << "variant=" << to_string(variant) << '\n';
  return out.str();
}

RunConfig RunConfig::from_text(std::string_view text) {
  RunConfig c;
  auto size = [](std::size_t& field) {
    return [&field](const std::string& key, const std::string& v) {
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), field);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("run config key '" + key + "' expects an integer, got '" + v + "'");
      }
    };
  };
  auto real = [](double& field) {
    return [&field](const std::string& key, const std::string& v) {
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), field);
      if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("run config key '" + key + "' expects a number, got '" + v + "'");
      }
    };
  };
  auto pair = [&size](Pair& field) {
    return [&field, &size](const std::string& key, const std::string& v) {
      auto comma = v.find(',');
      if (comma == std::string::npos) throw ConfigError("run config key '" + key + "' expects 'a,b', got '" + v + "'");
      size(field[0])(key, v.substr(0, comma));
      size(field[1])(key, v.substr(comma + 1));
    };
  };
  std::size_t ff = 0;
  std::uint64_t seed = c.seed;
  const std::map<std::string, std::function<void(const std::string&, const std::string&)>> fields{
      {"dim", size(c.dim)},
      {"query_length", size(c.query_length)},
      {"category_length", size(c.category_length)},
      {"encoder_layers", size(c.encoder_layers)},
      {"heads", size(c.heads)},
      {"ff_width", size(ff)},
      {"conv_filters", size(c.conv_filters)},
      {"conv_blocks", size(c.conv_blocks)},
      {"conv_window", pair(c.conv_window)},
      {"conv_stride", pair(c.conv_stride)},
      {"pool_window", pair(c.pool_window)},
      {"pool_stride", pair(c.pool_stride)},
      {"lr", real(c.lr)},
      {"batch_size", size(c.batch_size)},
      {"epochs", size(c.epochs)},
      {"threshold", real(c.threshold)},
      {"seed",
       [&seed](const std::string& key, const std::string& v) {
         auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), seed);
         if (ec != std::errc() || ptr != v.data() + v.size()) {
           throw ConfigError("run config key '" + key + "' expects an integer, got '" + v + "'");
         }
       }},
      {"workers", size(c.workers)},
      {"variant", [&c](const std::string&, const std::string& v) { c.variant = parse_variant(v); }},
  };
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed run config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("unknown run config key '" + key + "'");
    it->second(key, line.substr(eq + 1));
  }
  // to_text writes the resolved width; keep 0 (meaning 4d) when it matches.
  c.ff_width = ff == 4 * c.dim ? 0 : ff;
  c.seed = seed;
  return c;
}

}  // namespace mman
