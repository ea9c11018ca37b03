#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mman/ops.hpp"

namespace mman {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Which matching branch, if any, is removed from the fusion head.
enum class Variant { kFull, kNoSelf, kNoChar, kNoSemantic };

std::string_view to_string(Variant v);
/// Shortest decimal text that parses back to exactly `value`.
std::string format_real(double value);
Variant parse_variant(std::string_view name);

/// Architecture of one model instance. Everything here is needed to rebuild
/// the parameter shapes, so it is written verbatim into checkpoints.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_categories = 0;
  std::size_t dim = 64;
  std::size_t query_length = 16;
  std::size_t category_length = 32;
  std::size_t encoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 0;  // 0 means 4 * dim
  std::size_t conv_filters = 8;
  std::size_t conv_blocks = 2;
  Pair conv_window{3, 3};
  Pair conv_stride{1, 1};
  Pair pool_window{2, 2};
  Pair pool_stride{2, 2};
  double layer_norm_eps = 1e-5;
  Variant variant = Variant::kFull;

  std::size_t feed_forward_width() const { return ff_width == 0 ? 4 * dim : ff_width; }

  /// Spatial extent of one category's feature map after every conv/pool block.
  /// Throws ConfigError naming the block at which an extent collapses.
  Pair char_map_extent() const;
  std::size_t char_flat_size() const { return conv_filters * char_map_extent()[0] * char_map_extent()[1]; }

  void validate() const;

  /// Canonical `key=value` lines, fixed key order.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace mman
