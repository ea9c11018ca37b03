#include "mman/model_config.hpp"

#include <charconv>
#include <map>
#include <sstream>

namespace mman {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoSelf: return "no_self";
    case Variant::kNoChar: return "no_char";
    case Variant::kNoSemantic: return "no_semantic";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::kFull;
  if (name == "no_self") return Variant::kNoSelf;
  if (name == "no_char") return Variant::kNoChar;
  if (name == "no_semantic") return Variant::kNoSemantic;
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

Pair ModelConfig::char_map_extent() const {
  std::size_t h = query_length, w = category_length;
  for (std::size_t block = 0; block < conv_blocks; ++block) {
    auto describe = [&](const char* stage) {
      return std::string("char-level map collapses at ") + stage + " of block " + std::to_string(block + 1) +
             ": " + std::to_string(h) + "x" + std::to_string(w) + " (query_length=" +
             std::to_string(query_length) + ", category_length=" + std::to_string(category_length) + ")";
    };
    if (h < conv_window[0] || w < conv_window[1]) throw ConfigError(describe("convolution"));
    h = (h - conv_window[0]) / conv_stride[0] + 1;
    w = (w - conv_window[1]) / conv_stride[1] + 1;
    if (h < pool_window[0] || w < pool_window[1]) throw ConfigError(describe("pooling"));
    h = (h - pool_window[0]) / pool_stride[0] + 1;
    w = (w - pool_window[1]) / pool_stride[1] + 1;
  }
  return {h, w};
}

void ModelConfig::validate() const {
  if (vocab_size <= 2) throw ConfigError("vocab_size must exceed the 2 reserved ids");
  if (num_categories == 0) throw ConfigError("num_categories must be positive");
  if (dim == 0 || query_length == 0 || category_length == 0) throw ConfigError("dimensions must be positive");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
  if (conv_filters == 0) throw ConfigError("conv_filters must be positive");
  if (conv_stride[0] == 0 || conv_stride[1] == 0 || pool_stride[0] == 0 || pool_stride[1] == 0) {
    throw ConfigError("strides must be positive");
  }
  if (variant != Variant::kNoChar) {
    if (conv_blocks == 0) throw ConfigError("the char-level branch needs at least one conv block");
    char_map_extent();
  }
}

std::string format_real(double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "vocab_size=" << vocab_size << '\n'
      << "num_categories=" << num_categories << '\n'
      << "dim=" << dim << '\n'
      << "query_length=" << query_length << '\n'
      << "category_length=" << category_length << '\n'
      << "encoder_layers=" << encoder_layers << '\n'
      << "heads=" << heads << '\n'
      << "ff_width=" << feed_forward_width() << '\n'
      << "conv_filters=" << conv_filters << '\n'
      << "conv_blocks=" << conv_blocks << '\n'
      << "conv_window=" << conv_window[0] << ',' << conv_window[1] << '\n'
      << "conv_stride=" << conv_stride[0] << ',' << conv_stride[1] << '\n'
      << "pool_window=" << pool_window[0] << ',' << pool_window[1] << '\n'
      << "pool_stride=" << pool_stride[0] << ',' << pool_stride[1] << '\n'
      << "layer_norm_eps=" << format_real(layer_norm_eps) << '\n'
      << "variant=" << to_string(variant) << '\n';
  return out.str();
}

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

Pair parse_pair(const std::string& key, const std::string& value) {
  auto comma = value.find(',');
  if (comma == std::string::npos) throw ConfigError("config key '" + key + "' expects 'a,b', got '" + value + "'");
  return {parse_size(key, value.substr(0, comma)), parse_size(key, value.substr(comma + 1))};
}

}  // namespace

ModelConfig ModelConfig::from_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("config is missing key '" + key + "'");
    return it->second;
  };
  ModelConfig c;
  c.vocab_size = parse_size("vocab_size", take("vocab_size"));
  c.num_categories = parse_size("num_categories", take("num_categories"));
  c.dim = parse_size("dim", take("dim"));
  c.query_length = parse_size("query_length", take("query_length"));
  c.category_length = parse_size("category_length", take("category_length"));
  c.encoder_layers = parse_size("encoder_layers", take("encoder_layers"));
  c.heads = parse_size("heads", take("heads"));
  c.ff_width = parse_size("ff_width", take("ff_width"));
  c.conv_filters = parse_size("conv_filters", take("conv_filters"));
  c.conv_blocks = parse_size("conv_blocks", take("conv_blocks"));
  c.conv_window = parse_pair("conv_window", take("conv_window"));
  c.conv_stride = parse_pair("conv_stride", take("conv_stride"));
  c.pool_window = parse_pair("pool_window", take("pool_window"));
  c.pool_stride = parse_pair("pool_stride", take("pool_stride"));
  try {
    c.layer_norm_eps = std::stod(take("layer_norm_eps"));
  } catch (const std::logic_error&) {
    throw ConfigError("config key 'layer_norm_eps' is not a number");
  }
  c.variant = parse_variant(take("variant"));
  return c;
}

}  // namespace mman
