#include "mman/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "mman/rng.hpp"

namespace mman {

namespace {

void check_data(const std::vector<TokenSequence>& categories, std::span<const LabeledQuery* const> batch) {
  for (const auto* ex : batch) {
    if (ex->labels.size() != categories.size()) {
      throw std::invalid_argument("example '" + ex->text + "' has " + std::to_string(ex->labels.size()) +
                                  " labels but the category set has " + std::to_string(categories.size()));
    }
  }
}

// Sum of per-example losses over `batch`, scaled by `scale_by`, with the
// gradient of that quantity accumulated into `model`'s parameters.
double backprop_slice(const Model& model, const std::vector<TokenSequence>& categories,
                      std::span<const LabeledQuery* const> batch, double scale_by) {
  if (batch.empty()) return 0.0;
  CategoryContext ctx = model.encode_categories(categories);
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const auto* ex : batch) losses.push_back(multilabel_loss(model.forward(ex->query, ctx), ex->labels));
  Tensor total = scale(sum(stack(losses)), scale_by);
  backward(total);
  return total.item();
}

}  // namespace

double accumulate_batch_gradients(const Model& model, const std::vector<TokenSequence>& categories,
                                  std::span<const LabeledQuery* const> batch, std::size_t workers) {
  check_data(categories, batch);
  const double inv = 1.0 / static_cast<double>(batch.size());
  workers = std::clamp<std::size_t>(workers, 1, batch.size());
  if (workers == 1) return backprop_slice(model, categories, batch, inv);

  std::vector<Model> replicas;
  replicas.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) replicas.push_back(model.clone());
  std::vector<double> partial(workers, 0.0);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  const std::size_t chunk = (batch.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(batch.size(), w * chunk), hi = std::min(batch.size(), lo + chunk);
    threads.emplace_back([&, w, lo, hi] {
      try {
        partial[w] = backprop_slice(replicas[w], categories, batch.subspan(lo, hi - lo), inv);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  auto params = model.parameters();
  for (std::size_t w = 0; w < workers; ++w) {
    auto replica_params = replicas[w].parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto dst = params[k].value.mutable_grad();
      auto src = replica_params[k].value.grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
  double loss = 0.0;
  for (double p : partial) loss += p;
  return loss;
}

double mean_loss(const Model& model, const std::vector<TokenSequence>& categories,
                 const std::vector<LabeledQuery>& data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  NoGradGuard no_grad;
  CategoryContext ctx = model.encode_categories(categories);
  double total = 0.0;
  for (const auto& ex : data) total += multilabel_loss(model.forward(ex.query, ctx), ex.labels).item();
  return total / static_cast<double>(data.size());
}

TrainResult train(Model& model, const std::vector<TokenSequence>& categories, const std::vector<LabeledQuery>& data,
                  const TrainConfig& config, const std::vector<LabeledQuery>* eval_data,
                  const EpochCallback& on_epoch) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (config.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (categories.size() != model.config().num_categories) {
    throw std::invalid_argument("train: model has |C|=" + std::to_string(model.config().num_categories) +
                                " but " + std::to_string(categories.size()) + " categories were given");
  }
  std::vector<const LabeledQuery*> order;
  order.reserve(data.size());
  for (const auto& ex : data) order.push_back(&ex);
  check_data(categories, order);

  auto named = model.parameters();
  std::vector<Tensor> params;
  for (auto& p : named) params.push_back(p.value);
  for (auto& p : params) p.zero_grad();

  TrainResult result;
  result.optimizer = AdamState::for_parameters(params, AdamOptions{.lr = config.lr});
  Rng rng(config.seed);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<const LabeledQuery*>(order));
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::span<const LabeledQuery* const> batch(order.data() + start, n);
      const double loss = accumulate_batch_gradients(model, categories, batch, config.workers);
      adam_step(params, result.optimizer);
      weighted += loss * static_cast<double>(n);
    }
    EpochSummary summary;
    summary.epoch = epoch;
    summary.mean_loss = weighted / static_cast<double>(order.size());
    result.epoch_losses.push_back(summary.mean_loss);
    if (eval_data && config.eval_every > 0 && epoch % config.eval_every == 0) {
      summary.eval = evaluate(model, categories, *eval_data, config.threshold);
    }
    if (on_epoch) on_epoch(summary);
  }
  return result;
}

std::vector<std::vector<double>> predict_logits(const Model& model, const std::vector<TokenSequence>& categories,
                                                std::span<const TokenSequence> queries) {
  NoGradGuard no_grad;
  CategoryContext ctx = model.encode_categories(categories);
  std::vector<std::vector<double>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    Tensor logits = model.forward(q, ctx);
    out.emplace_back(logits.data().begin(), logits.data().end());
  }
  return out;
}

MetricsReport evaluate(const Model& model, const std::vector<TokenSequence>& categories,
                       const std::vector<LabeledQuery>& data, double threshold) {
  std::vector<TokenSequence> queries;
  std::vector<LabelVector> golds;
  for (const auto& ex : data) {
    queries.push_back(ex.query);
    golds.push_back(to_label_vector(ex.labels));
  }
  auto logits = predict_logits(model, categories, queries);
  std::vector<LabelVector> preds;
  preds.reserve(logits.size());
  for (const auto& l : logits) preds.push_back(decide(l, threshold));
  return compute_metrics(preds, golds, threshold);
}

}  // namespace mman
