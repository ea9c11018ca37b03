#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mman/tensor.hpp"

namespace mman {

using Pair = std::array<std::size_t, 2>;

enum class Activation { kTanh, kRelu, kSigmoid };
enum class Reduction { kMean, kSum };

// Linear algebra. All matrices are rank-2 and row-major.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Same-shape elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Adds a length-n vector (shape [n] or [1 x n]) to every row of an m x n matrix.
Tensor add_row(const Tensor& a, const Tensor& row);

Tensor elementwise(const Tensor& x, Activation f);
inline Tensor tanh(const Tensor& x) { return elementwise(x, Activation::kTanh); }
inline Tensor relu(const Tensor& x) { return elementwise(x, Activation::kRelu); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(x, Activation::kSigmoid); }

/// Max-stabilized softmax along `axis`. With `valid_extent`, only the first
/// `valid_extent` positions along the axis take part; the rest are exactly 0.
Tensor softmax(const Tensor& x, std::size_t axis, std::optional<std::size_t> valid_extent = std::nullopt);

/// Reduces `axis` away. A rank-1 input reduces to shape [1].
Tensor reduce(const Tensor& x, Reduction op, std::size_t axis);
Tensor sum(const Tensor& x);

/// Valid (unpadded) cross-correlation.
/// input [in x H x W], kernels [out x in x kh x kw], bias [out] -> [out x H' x W'].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Pair stride);

/// Max over each window; trailing partial windows are dropped. On ties the
/// first position in row-major window order receives the gradient.
Tensor maxpool2d(const Tensor& input, Pair window, Pair stride);

Tensor reshape(const Tensor& x, Shape shape);
inline Tensor flatten(const Tensor& x) { return reshape(x, {x.size()}); }

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(std::span<const Tensor> parts);
/// Stacks equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

/// Embedding lookup: one row of `table` per id.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Per-row layer normalization with learned gain and offset (both [n]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps);

/// Sum over elements of the binary cross-entropy between sigmoid(logits) and
/// 0/1 targets, in the overflow-free logit form.
Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets);

}  // namespace mman
