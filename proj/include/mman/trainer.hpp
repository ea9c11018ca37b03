#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mman/metrics.hpp"
#include "mman/model.hpp"
#include "mman/optim.hpp"
#include "mman/text.hpp"

namespace mman {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  std::uint64_t seed = 42;
  /// Data-parallel gradient workers. Each worker handles a contiguous slice
  /// of the batch; their gradients are summed in worker order, so results
  /// depend on the worker count only through that summation order.
  std::size_t workers = 1;
  /// Evaluate on the held-out set every this many epochs (0 disables).
  std::size_t eval_every = 0;
  double threshold = 0.5;
};

struct EpochSummary {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::optional<MetricsReport> eval;
};

struct TrainResult {
  std::vector<double> epoch_losses;
  AdamState optimizer;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

/// Mean per-example loss of one batch with gradients left in the parameters.
double accumulate_batch_gradients(const Model& model, const std::vector<TokenSequence>& categories,
                                  std::span<const LabeledQuery* const> batch, std::size_t workers);

/// Mean multi-label loss over a dataset, without recording gradients.
double mean_loss(const Model& model, const std::vector<TokenSequence>& categories,
                 const std::vector<LabeledQuery>& data);

/// Seeded mini-batch Adam. Each step encodes the categories once with the
/// current weights, sums per-example losses, and divides by the batch size.
TrainResult train(Model& model, const std::vector<TokenSequence>& categories, const std::vector<LabeledQuery>& data,
                  const TrainConfig& config, const std::vector<LabeledQuery>* eval_data = nullptr,
                  const EpochCallback& on_epoch = {});

/// Logits for each query under fixed weights.
std::vector<std::vector<double>> predict_logits(const Model& model, const std::vector<TokenSequence>& categories,
                                                std::span<const TokenSequence> queries);

MetricsReport evaluate(const Model& model, const std::vector<TokenSequence>& categories,
                       const std::vector<LabeledQuery>& data, double threshold);

}  // namespace mman
