#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mman/tensor.hpp"

namespace mman {

struct AdamOptions {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for a fixed parameter list.
struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static AdamState for_parameters(std::span<const Tensor> params, AdamOptions options);
};

/// One bias-corrected Adam update of every parameter from its gradient
/// buffer; gradients are zeroed afterwards.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace mman
