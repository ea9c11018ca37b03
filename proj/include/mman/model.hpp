#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mman/encoder.hpp"
#include "mman/model_config.hpp"
#include "mman/ops.hpp"
#include "mman/tensor.hpp"
#include "mman/text.hpp"

namespace mman {

/// Attention pooling of the query over its own tokens.
struct SelfMatchParams {
  Tensor projection;  // [d x d]
  Tensor score;       // [1 x d]
};

struct ConvBlock {
  Tensor kernels;  // [filters x in_channels x kh x kw]
  Tensor bias;     // [filters]
};

/// Bilinear query/category interaction followed by a shared conv stack.
struct CharMatchParams {
  Tensor bilinear;  // [d x d]
  std::vector<ConvBlock> blocks;
  Tensor projection;  // [flat x d]
  Pair conv_stride{1, 1};
  Pair pool_window{2, 2};
  Pair pool_stride{2, 2};
};

struct SemanticMatchParams {
  Tensor bilinear;  // [d x d]
};

/// Fusion head. `query_to_label` is undefined when the self-matching branch
/// is ablated; `match_weight` then has d rows per remaining branch.
struct FusionParams {
  Tensor query_to_label;  // [d x |C|]
  Tensor match_weight;    // [2d x 1], or [d x 1] with one branch removed
  Tensor label_mix;       // [|C| x |C|]
};

/// The three granularities fed to the fusion head. Ablated branches are left
/// undefined.
struct MatchFeatures {
  Tensor query;       // [1 x d]
  Tensor char_level;  // [|C| x d]
  Tensor semantic;    // [|C| x d]
};

struct SelfMatchResult {
  Tensor query;      // [1 x d]
  Tensor attention;  // [L_q]
};

SelfMatchResult self_match(const Tensor& query_tokens, const SelfMatchParams& p, std::size_t true_length);

/// Interaction map Q W C^T, [L_q x L_c].
Tensor char_interaction(const Tensor& query_tokens, const Tensor& category_tokens, const CharMatchParams& p);

/// Per-category conv/ReLU/pool stack over `maps` ([|C| x L_q x L_c]), flattened
/// and projected to [|C| x d]. Categories are a batch axis sharing weights.
Tensor char_match(const Tensor& maps, const CharMatchParams& p);

/// Row-stacked mean of each category's first `lengths[j]` rows, [|C| x d].
Tensor category_means(std::span<const Tensor> categories, std::span<const std::size_t> lengths);

/// Cross-attention of every category summary over the valid query tokens.
Tensor semantic_attend(const Tensor& query_tokens, const Tensor& category_summary, const SemanticMatchParams& p,
                       std::size_t true_length);

Tensor semantic_match(const Tensor& query_tokens, std::span<const Tensor> categories,
                      std::span<const std::size_t> category_lengths, const SemanticMatchParams& p,
                      std::size_t true_length);

/// Label logits ([|C|]) from the match features.
Tensor fuse_and_score(const MatchFeatures& features, const FusionParams& p);

/// Summed per-label binary cross-entropy of one example.
Tensor multilabel_loss(const Tensor& logits, std::span<const double> labels);

/// Zeroes rows at or beyond `valid` (returns `x` unchanged when none are).
Tensor zero_padding_rows(const Tensor& x, std::size_t valid);

/// Encoded label space, reusable across every query that sees the same
/// parameters (one optimizer step or one inference session).
struct CategoryContext {
  std::vector<Tensor> tokens;         // per category, [L_c x d]
  std::vector<Tensor> masked_tokens;  // padding rows zeroed
  std::vector<std::size_t> lengths;
  Tensor summary;  // [|C| x d], undefined when the semantic branch is ablated
};

struct ForwardTrace {
  Tensor query_tokens;
  MatchFeatures features;
  Tensor self_attention;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// Every trainable tensor, in a fixed declaration order.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

  CategoryContext encode_categories(const std::vector<TokenSequence>& categories) const;
  Tensor forward(const TokenSequence& query, const CategoryContext& categories, ForwardTrace* trace = nullptr) const;
  Tensor forward(const TokenSequence& query, const std::vector<TokenSequence>& categories) const {
    return forward(query, encode_categories(categories));
  }

  /// Deep copy with independent storage and gradients.
  Model clone() const;

  /// Sets every fusion weight to zero (logits become exactly 0).
  void zero_fusion_head();

  EncoderParams encoder;
  std::optional<SelfMatchParams> self;
  std::optional<CharMatchParams> chars;
  std::optional<SemanticMatchParams> semantic;
  FusionParams fusion;

 private:
  ModelConfig config_;
};

}  // namespace mman
