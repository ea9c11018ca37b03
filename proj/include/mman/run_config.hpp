#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "mman/model_config.hpp"
#include "mman/trainer.hpp"

namespace mman {

/// Every tunable of a train/eval run. Vocabulary size and |C| come from the
/// data files, everything else from here.
struct RunConfig {
  std::size_t dim = 64;
  std::size_t query_length = 16;
  std::size_t category_length = 32;
  std::size_t encoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 0;
  std::size_t conv_filters = 8;
  std::size_t conv_blocks = 2;
  Pair conv_window{3, 3};
  Pair conv_stride{1, 1};
  Pair pool_window{2, 2};
  Pair pool_stride{2, 2};
  double lr = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double threshold = 0.5;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  Variant variant = Variant::kFull;

  ModelConfig model_config(std::size_t vocab_size, std::size_t num_categories) const;
  TrainConfig train_config() const;

  /// `key=value` lines in a fixed order.
  std::string to_text() const;
  /// Inverse of to_text. Absent keys keep their defaults; unknown keys and
  /// malformed values are ConfigErrors.
  static RunConfig from_text(std::string_view text);
};

}  // namespace mman
