#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mman/model_config.hpp"
#include "mman/rng.hpp"
#include "mman/tensor.hpp"
#include "mman/text.hpp"

namespace mman {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct EncoderLayer {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
  Tensor attention_norm_gain, attention_norm_offset;
  Tensor ff_in_weight, ff_in_bias;
  Tensor ff_out_weight, ff_out_bias;
  Tensor ff_norm_gain, ff_norm_offset;
};

/// Weights of the token encoder shared by the query and category paths.
struct EncoderParams {
  Tensor token_embedding;     // [vocab x d]
  Tensor position_embedding;  // [max(query_length, category_length) x d]
  std::vector<EncoderLayer> layers;
  std::size_t heads = 1;
  double layer_norm_eps = 1e-5;

  static EncoderParams init(const ModelConfig& config, Rng& rng);
  std::size_t dim() const { return token_embedding.dim(1); }
  void collect(std::vector<NamedTensor>& out) const;
};

/// Contextual embedding of every position of `tokens` ([L x d]).
///
/// Embedding lookup plus learned positions, then `layers` rounds of masked
/// multi-head self-attention and a ReLU feed-forward block, each followed by
/// a residual add and post-norm. Keys at or beyond `true_length` get zero
/// attention weight, so padding never leaks into real positions. No summary
/// token is prepended.
Tensor encode(const TokenSequence& tokens, const EncoderParams& params);

std::vector<Tensor> encode_all_categories(const std::vector<TokenSequence>& categories, const EncoderParams& params);

/// Draws a tensor uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)].
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace mman
