#include "mman/optim.hpp"

#include <cmath>
#include <string>

namespace mman {

AdamState AdamState::for_parameters(std::span<const Tensor> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.size(), 0.0);
    state.second_moment.emplace_back(p.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size() || params.size() != state.second_moment.size()) {
    throw ContractError("adam_step: optimizer tracks " + std::to_string(state.first_moment.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != state.first_moment[k].size() || !params[k].has_grad()) {
      throw ContractError("adam_step: parameter " + std::to_string(k) + " " + shape_to_string(params[k].shape()) +
                          " does not match its moment buffers or has no gradient");
    }
  }
  const auto& o = state.options;
  ++state.step;
  const double correction1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].mutable_data();
    auto grad = params[k].mutable_grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      value[i] -= o.lr * (m[i] / correction1) / (std::sqrt(v[i] / correction2) + o.eps);
    }
    params[k].zero_grad();
  }
}

}  // namespace mman
