#include "mman/model.hpp"

#include <algorithm>

namespace mman {

SelfMatchResult self_match(const Tensor& query_tokens, const SelfMatchParams& p, std::size_t true_length) {
  const std::size_t length = query_tokens.dim(0);
  if (true_length == 0 || true_length > length) {
    throw ContractError("self_match: true length " + std::to_string(true_length) + " outside [1, " +
                        std::to_string(length) + "]");
  }
  Tensor scores = matmul(p.score, tanh(matmul(p.projection, transpose(query_tokens))));  // [1 x L_q]
  Tensor weights = softmax(scores, 1, true_length);
  return {matmul(weights, query_tokens), reshape(weights, {length})};
}

Tensor char_interaction(const Tensor& query_tokens, const Tensor& category_tokens, const CharMatchParams& p) {
  return matmul(matmul(query_tokens, p.bilinear), transpose(category_tokens));
}

Tensor char_match(const Tensor& maps, const CharMatchParams& p) {
  if (maps.rank() != 3) throw DimensionError("char_match: expected [|C| x L_q x L_c], got " + shape_to_string(maps.shape()));
  const std::size_t categories = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  const Tensor per_category = reshape(maps, {categories, h * w});
  std::vector<Tensor> rows;
  rows.reserve(categories);
  for (std::size_t j = 0; j < categories; ++j) {
    Tensor x = reshape(slice_rows(per_category, j, j + 1), {1, h, w});
    for (const auto& block : p.blocks) {
      x = maxpool2d(relu(conv2d(x, block.kernels, block.bias, p.conv_stride)), p.pool_window, p.pool_stride);
    }
    rows.push_back(flatten(x));
  }
  Tensor flat = stack(rows);
  if (flat.dim(1) != p.projection.dim(0)) {
    throw DimensionError("char_match: flattened width " + std::to_string(flat.dim(1)) + " does not match projection " +
                         shape_to_string(p.projection.shape()));
  }
  return matmul(flat, p.projection);
}

Tensor category_means(std::span<const Tensor> categories, std::span<const std::size_t> lengths) {
  if (categories.size() != lengths.size()) throw DimensionError("category_means: lengths do not match categories");
  std::vector<Tensor> means;
  means.reserve(categories.size());
  for (std::size_t j = 0; j < categories.size(); ++j) {
    const std::size_t valid = lengths[j];
    const Tensor& c = categories[j];
    means.push_back(reduce(valid == c.dim(0) ? c : slice_rows(c, 0, valid), Reduction::kMean, 0));
  }
  return stack(means);
}

Tensor semantic_attend(const Tensor& query_tokens, const Tensor& category_summary, const SemanticMatchParams& p,
                       std::size_t true_length) {
  Tensor scores = matmul(matmul(category_summary, p.bilinear), transpose(query_tokens));  // [|C| x L_q]
  return matmul(softmax(scores, 1, true_length), query_tokens);
}

Tensor semantic_match(const Tensor& query_tokens, std::span<const Tensor> categories,
                      std::span<const std::size_t> category_lengths, const SemanticMatchParams& p,
                      std::size_t true_length) {
  return semantic_attend(query_tokens, category_means(categories, category_lengths), p, true_length);
}

Tensor fuse_and_score(const MatchFeatures& features, const FusionParams& p) {
  const std::size_t labels = p.label_mix.dim(0);
  std::vector<Tensor> branches;
  if (features.char_level.defined()) branches.push_back(features.char_level);
  if (features.semantic.defined()) branches.push_back(features.semantic);

  Tensor pre;
  if (!branches.empty()) {
    Tensor joined = branches.size() == 1 ? branches[0] : concat_cols(branches);
    pre = reshape(matmul(joined, p.match_weight), {1, labels});
  }
  if (p.query_to_label.defined()) {
    Tensor from_query = matmul(features.query, p.query_to_label);
    pre = pre.defined() ? add(pre, from_query) : from_query;
  }
  if (!pre.defined()) throw ContractError("fuse_and_score: no active branch");
  return reshape(matmul(relu(pre), p.label_mix), {labels});
}

Tensor multilabel_loss(const Tensor& logits, std::span<const double> labels) { return bce_with_logits(logits, labels); }

Tensor zero_padding_rows(const Tensor& x, std::size_t valid) {
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (valid >= rows) return x;
  std::vector<double> mask(rows * cols, 0.0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(valid * cols), 1.0);
  return mul(x, Tensor::from({rows, cols}, std::move(mask)));
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.dim, labels = config_.num_categories;
  encoder = EncoderParams::init(config_, rng);
  if (config_.variant != Variant::kNoSelf) {
    self = SelfMatchParams{init_uniform({d, d}, d, rng), init_uniform({1, d}, d, rng)};
  }
  if (config_.variant != Variant::kNoChar) {
    CharMatchParams c;
    c.bilinear = init_uniform({d, d}, d, rng);
    std::size_t in_channels = 1;
    const auto [kh, kw] = config_.conv_window;
    for (std::size_t b = 0; b < config_.conv_blocks; ++b) {
      const std::size_t fan_in = in_channels * kh * kw;
      c.blocks.push_back({init_uniform({config_.conv_filters, in_channels, kh, kw}, fan_in, rng),
                          init_uniform({config_.conv_filters}, fan_in, rng)});
      in_channels = config_.conv_filters;
    }
    const std::size_t flat = config_.char_flat_size();
    c.projection = init_uniform({flat, d}, flat, rng);
    c.conv_stride = config_.conv_stride;
    c.pool_window = config_.pool_window;
    c.pool_stride = config_.pool_stride;
    chars = std::move(c);
  }
  if (config_.variant != Variant::kNoSemantic) semantic = SemanticMatchParams{init_uniform({d, d}, d, rng)};

  const std::size_t branch_width = (chars ? d : 0) + (semantic ? d : 0);
  if (self) fusion.query_to_label = init_uniform({d, labels}, d, rng);
  fusion.match_weight = init_uniform({branch_width, 1}, branch_width, rng);
  fusion.label_mix = init_uniform({labels, labels}, labels, rng);
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  encoder.collect(out);
  if (self) {
    out.push_back({"self_match.projection", self->projection});
    out.push_back({"self_match.score", self->score});
  }
  if (chars) {
    out.push_back({"char_match.bilinear", chars->bilinear});
    for (std::size_t b = 0; b < chars->blocks.size(); ++b) {
      out.push_back({"char_match.conv" + std::to_string(b) + ".kernels", chars->blocks[b].kernels});
      out.push_back({"char_match.conv" + std::to_string(b) + ".bias", chars->blocks[b].bias});
    }
    out.push_back({"char_match.projection", chars->projection});
  }
  if (semantic) out.push_back({"semantic_match.bilinear", semantic->bilinear});
  if (fusion.query_to_label.defined()) out.push_back({"fusion.query_to_label", fusion.query_to_label});
  out.push_back({"fusion.match_weight", fusion.match_weight});
  out.push_back({"fusion.label_mix", fusion.label_mix});
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.size();
  return n;
}

CategoryContext Model::encode_categories(const std::vector<TokenSequence>& categories) const {
  if (categories.size() != config_.num_categories) {
    throw ConfigError("model expects " + std::to_string(config_.num_categories) + " categories, got " +
                      std::to_string(categories.size()));
  }
  CategoryContext ctx;
  ctx.tokens = encode_all_categories(categories, encoder);
  for (std::size_t j = 0; j < categories.size(); ++j) {
    ctx.lengths.push_back(categories[j].true_length);
    if (chars) ctx.masked_tokens.push_back(zero_padding_rows(ctx.tokens[j], categories[j].true_length));
  }
  if (semantic) ctx.summary = category_means(ctx.tokens, ctx.lengths);
  return ctx;
}

Tensor Model::forward(const TokenSequence& query, const CategoryContext& categories, ForwardTrace* trace) const {
  if (categories.tokens.size() != config_.num_categories) {
    throw ConfigError("model expects " + std::to_string(config_.num_categories) + " encoded categories, got " +
                      std::to_string(categories.tokens.size()));
  }
  Tensor q_tokens = encode(query, encoder);
  MatchFeatures features;
  Tensor attention;
  if (self) {
    auto sm = self_match(q_tokens, *self, query.true_length);
    features.query = sm.query;
    attention = sm.attention;
  }
  if (chars) {
    Tensor masked = zero_padding_rows(q_tokens, query.true_length);
    std::vector<Tensor> maps;
    maps.reserve(categories.masked_tokens.size());
    for (const auto& c : categories.masked_tokens) maps.push_back(char_interaction(masked, c, *chars));
    features.char_level = char_match(stack(maps), *chars);
  }
  if (semantic) features.semantic = semantic_attend(q_tokens, categories.summary, *semantic, query.true_length);
  Tensor logits = fuse_and_score(features, fusion);
  if (trace) {
    trace->query_tokens = q_tokens;
    trace->features = features;
    trace->self_attention = attention;
  }
  return logits;
}

Model Model::clone() const {
  Model copy = *this;
  auto copy_tensor = [](Tensor& t) {
    if (t.defined()) t = t.clone();
  };
  copy_tensor(copy.encoder.token_embedding);
  copy_tensor(copy.encoder.position_embedding);
  for (auto& L : copy.encoder.layers) {
    for (Tensor* t : {&L.query_weight, &L.query_bias, &L.key_weight, &L.key_bias, &L.value_weight, &L.value_bias,
                      &L.output_weight, &L.output_bias, &L.attention_norm_gain, &L.attention_norm_offset,
                      &L.ff_in_weight, &L.ff_in_bias, &L.ff_out_weight, &L.ff_out_bias, &L.ff_norm_gain,
                      &L.ff_norm_offset}) {
      copy_tensor(*t);
    }
  }
  if (copy.self) {
    copy_tensor(copy.self->projection);
    copy_tensor(copy.self->score);
  }
  if (copy.chars) {
    copy_tensor(copy.chars->bilinear);
    for (auto& b : copy.chars->blocks) {
      copy_tensor(b.kernels);
      copy_tensor(b.bias);
    }
    copy_tensor(copy.chars->projection);
  }
  if (copy.semantic) copy_tensor(copy.semantic->bilinear);
  copy_tensor(copy.fusion.query_to_label);
  copy_tensor(copy.fusion.match_weight);
  copy_tensor(copy.fusion.label_mix);
  return copy;
}

void Model::zero_fusion_head() {
  for (Tensor* t : {&fusion.query_to_label, &fusion.match_weight, &fusion.label_mix}) {
    if (!t->defined()) continue;
    auto values = t->mutable_data();
    std::fill(values.begin(), values.end(), 0.0);
  }
}

}  // namespace mman
