#include "mman/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "mman/ops.hpp"

namespace mman {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  Tensor t = Tensor::from(std::move(shape), std::move(values));
  t.set_requires_grad();
  return t;
}

namespace {

Tensor constant_param(Shape shape, double value) {
  Tensor t = Tensor::full(std::move(shape), value);
  t.set_requires_grad();
  return t;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) { return add_row(matmul(x, weight), bias); }

Tensor self_attention(const Tensor& x, const EncoderLayer& layer, std::size_t heads, std::size_t valid) {
  const std::size_t d = x.dim(1);
  const std::size_t head_dim = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = linear(x, layer.query_weight, layer.query_bias);
  Tensor k = linear(x, layer.key_weight, layer.key_bias);
  Tensor v = linear(x, layer.value_weight, layer.value_bias);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    Tensor qh = heads == 1 ? q : slice_cols(q, lo, hi);
    Tensor kh = heads == 1 ? k : slice_cols(k, lo, hi);
    Tensor vh = heads == 1 ? v : slice_cols(v, lo, hi);
    Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1, valid);
    outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? outputs[0] : concat_cols(outputs);
  return linear(merged, layer.output_weight, layer.output_bias);
}

}  // namespace

EncoderParams EncoderParams::init(const ModelConfig& config, Rng& rng) {
  const std::size_t d = config.dim, ff = config.feed_forward_width();
  EncoderParams p;
  p.heads = config.heads;
  p.layer_norm_eps = config.layer_norm_eps;
  p.token_embedding = init_uniform({config.vocab_size, d}, d, rng);
  p.position_embedding = init_uniform({std::max(config.query_length, config.category_length), d}, d, rng);
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    EncoderLayer layer;
    layer.query_weight = init_uniform({d, d}, d, rng);
    layer.query_bias = init_uniform({d}, d, rng);
    layer.key_weight = init_uniform({d, d}, d, rng);
    layer.key_bias = init_uniform({d}, d, rng);
    layer.value_weight = init_uniform({d, d}, d, rng);
    layer.value_bias = init_uniform({d}, d, rng);
    layer.output_weight = init_uniform({d, d}, d, rng);
    layer.output_bias = init_uniform({d}, d, rng);
    layer.attention_norm_gain = constant_param({d}, 1.0);
    layer.attention_norm_offset = constant_param({d}, 0.0);
    layer.ff_in_weight = init_uniform({d, ff}, d, rng);
    layer.ff_in_bias = init_uniform({ff}, d, rng);
    layer.ff_out_weight = init_uniform({ff, d}, ff, rng);
    layer.ff_out_bias = init_uniform({d}, ff, rng);
    layer.ff_norm_gain = constant_param({d}, 1.0);
    layer.ff_norm_offset = constant_param({d}, 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void EncoderParams::collect(std::vector<NamedTensor>& out) const {
  out.push_back({"encoder.token_embedding", token_embedding});
  out.push_back({"encoder.position_embedding", position_embedding});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string prefix = "encoder.layer" + std::to_string(l) + ".";
    out.push_back({prefix + "query_weight", L.query_weight});
    out.push_back({prefix + "query_bias", L.query_bias});
    out.push_back({prefix + "key_weight", L.key_weight});
    out.push_back({prefix + "key_bias", L.key_bias});
    out.push_back({prefix + "value_weight", L.value_weight});
    out.push_back({prefix + "value_bias", L.value_bias});
    out.push_back({prefix + "output_weight", L.output_weight});
    out.push_back({prefix + "output_bias", L.output_bias});
    out.push_back({prefix + "attention_norm_gain", L.attention_norm_gain});
    out.push_back({prefix + "attention_norm_offset", L.attention_norm_offset});
    out.push_back({prefix + "ff_in_weight", L.ff_in_weight});
    out.push_back({prefix + "ff_in_bias", L.ff_in_bias});
    out.push_back({prefix + "ff_out_weight", L.ff_out_weight});
    out.push_back({prefix + "ff_out_bias", L.ff_out_bias});
    out.push_back({prefix + "ff_norm_gain", L.ff_norm_gain});
    out.push_back({prefix + "ff_norm_offset", L.ff_norm_offset});
  }
}

Tensor encode(const TokenSequence& tokens, const EncoderParams& params) {
  const std::size_t length = tokens.ids.size();
  if (length == 0 || tokens.true_length == 0 || tokens.true_length > length) {
    throw ContractError("encode: malformed token sequence (length " + std::to_string(length) + ", true length " +
                        std::to_string(tokens.true_length) + ")");
  }
  const std::size_t vocab = params.token_embedding.dim(0);
  for (auto id : tokens.ids) {
    if (id >= vocab) {
      throw DimensionError("encode: token id " + std::to_string(id) + " outside vocabulary of size " +
                           std::to_string(vocab));
    }
  }
  if (length > params.position_embedding.dim(0)) {
    throw DimensionError("encode: sequence length " + std::to_string(length) + " exceeds " +
                         std::to_string(params.position_embedding.dim(0)) + " learned positions");
  }
  Tensor x = add(gather_rows(params.token_embedding, tokens.ids), slice_rows(params.position_embedding, 0, length));
  for (const auto& layer : params.layers) {
    x = layer_norm(add(x, self_attention(x, layer, params.heads, tokens.true_length)), layer.attention_norm_gain,
                   layer.attention_norm_offset, params.layer_norm_eps);
    Tensor ff = linear(relu(linear(x, layer.ff_in_weight, layer.ff_in_bias)), layer.ff_out_weight, layer.ff_out_bias);
    x = layer_norm(add(x, ff), layer.ff_norm_gain, layer.ff_norm_offset, params.layer_norm_eps);
  }
  return x;
}

std::vector<Tensor> encode_all_categories(const std::vector<TokenSequence>& categories, const EncoderParams& params) {
  std::vector<Tensor> out;
  out.reserve(categories.size());
  for (const auto& seq : categories) out.push_back(encode(seq, params));
  return out;
}

}  // namespace mman
