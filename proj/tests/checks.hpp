#pragma once

// Randomized oracle sweeps and the whole-network gradient check, shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mman/model.hpp"
#include "oracles.hpp"

namespace checks {

struct Sweep {
  std::size_t instances = 0;
  double max_error = 0.0;  // scaled by max(1, |oracle|)
};

inline double scaled_error(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

inline oracle::Vec values(const mman::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::size_t pick(std::mt19937_64& gen, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
}

inline Sweep sweep_conv2d(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t c = pick(gen, 1, 3), f = pick(gen, 1, 4), kh = pick(gen, 1, 3), kw = pick(gen, 1, 3);
    const std::size_t h = kh + pick(gen, 0, 5), w = kw + pick(gen, 0, 5), sh = pick(gen, 1, 2), sw = pick(gen, 1, 2);
    auto in = oracle::random_tensor({c, h, w}, gen, 1.0, false);
    auto k = oracle::random_tensor({f, c, kh, kw}, gen, 1.0, false);
    auto b = oracle::random_tensor({f}, gen, 1.0, false);
    std::size_t oh = 0, ow = 0;
    auto want = oracle::conv2d(values(in), c, h, w, values(k), f, kh, kw, values(b), sh, sw, oh, ow);
    auto got = mman::conv2d(in, k, b, {sh, sw});
    if (got.shape() != mman::Shape{f, oh, ow}) return {s.instances, INFINITY};
    for (std::size_t i = 0; i < want.size(); ++i) s.max_error = std::max(s.max_error, scaled_error(got[i], want[i]));
  }
  return s;
}

inline Sweep sweep_maxpool2d(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t c = pick(gen, 1, 3), ph = pick(gen, 1, 3), pw = pick(gen, 1, 3);
    const std::size_t h = ph + pick(gen, 0, 6), w = pw + pick(gen, 0, 6), sh = pick(gen, 1, 3), sw = pick(gen, 1, 3);
    auto in = oracle::random_tensor({c, h, w}, gen, 1.0, false);
    std::size_t oh = 0, ow = 0;
    auto want = oracle::maxpool2d(values(in), c, h, w, ph, pw, sh, sw, oh, ow);
    auto got = mman::maxpool2d(in, {ph, pw}, {sh, sw});
    if (got.shape() != mman::Shape{c, oh, ow}) return {s.instances, INFINITY};
    for (std::size_t i = 0; i < want.size(); ++i) s.max_error = std::max(s.max_error, scaled_error(got[i], want[i]));
  }
  return s;
}

inline Sweep sweep_self_match(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t len = pick(gen, 1, 6), d = pick(gen, 1, 6), valid = pick(gen, 1, len);
    auto q = oracle::random_tensor({len, d}, gen, 1.0, false);
    mman::SelfMatchParams p{oracle::random_tensor({d, d}, gen, 1.0, false),
                            oracle::random_tensor({1, d}, gen, 1.0, false)};
    oracle::Vec alpha;
    auto want = oracle::self_match(oracle::to_mat(q), oracle::to_mat(p.projection), values(p.score), valid, &alpha);
    auto got = mman::self_match(q, p, valid);
    for (std::size_t j = 0; j < d; ++j) s.max_error = std::max(s.max_error, scaled_error(got.query.at(0, j), want[j]));
    for (std::size_t t = 0; t < len; ++t) s.max_error = std::max(s.max_error, scaled_error(got.attention[t], alpha[t]));
  }
  return s;
}

inline Sweep sweep_char_interaction(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t lq = pick(gen, 1, 6), lc = pick(gen, 1, 6), d = pick(gen, 1, 6);
    auto q = oracle::random_tensor({lq, d}, gen, 1.0, false);
    auto c = oracle::random_tensor({lc, d}, gen, 1.0, false);
    mman::CharMatchParams p;
    p.bilinear = oracle::random_tensor({d, d}, gen, 1.0, false);
    auto want = oracle::bilinear(oracle::to_mat(q), oracle::to_mat(p.bilinear), oracle::to_mat(c));
    auto got = mman::char_interaction(q, c, p);
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t k = 0; k < lc; ++k) s.max_error = std::max(s.max_error, scaled_error(got.at(i, k), want[i][k]));
  }
  return s;
}

inline Sweep sweep_semantic_match(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t lq = pick(gen, 1, 6), lc = pick(gen, 1, 6), d = pick(gen, 1, 6), cats = pick(gen, 1, 4);
    const std::size_t valid = pick(gen, 1, lq);
    auto q = oracle::random_tensor({lq, d}, gen, 1.0, false);
    std::vector<mman::Tensor> c;
    std::vector<oracle::Mat> c_mats;
    std::vector<std::size_t> lengths;
    for (std::size_t j = 0; j < cats; ++j) {
      c.push_back(oracle::random_tensor({lc, d}, gen, 1.0, false));
      c_mats.push_back(oracle::to_mat(c.back()));
      lengths.push_back(pick(gen, 1, lc));
    }
    mman::SemanticMatchParams p{oracle::random_tensor({d, d}, gen, 1.0, false)};
    auto want = oracle::semantic_match(oracle::to_mat(q), c_mats, lengths, oracle::to_mat(p.bilinear), valid);
    auto got = mman::semantic_match(q, c, lengths, p, valid);
    for (std::size_t j = 0; j < cats; ++j)
      for (std::size_t k = 0; k < d; ++k) s.max_error = std::max(s.max_error, scaled_error(got.at(j, k), want[j][k]));
  }
  return s;
}

inline Sweep sweep_fuse_and_score(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t d = pick(gen, 1, 6), labels = pick(gen, 1, 6);
    mman::MatchFeatures f{oracle::random_tensor({1, d}, gen, 1.0, false),
                          oracle::random_tensor({labels, d}, gen, 1.0, false),
                          oracle::random_tensor({labels, d}, gen, 1.0, false)};
    mman::FusionParams p{oracle::random_tensor({d, labels}, gen, 1.0, false),
                         oracle::random_tensor({2 * d, 1}, gen, 1.0, false),
                         oracle::random_tensor({labels, labels}, gen, 1.0, false)};
    auto want = oracle::fuse(values(f.query), oracle::to_mat(f.char_level), oracle::to_mat(f.semantic),
                             oracle::to_mat(p.query_to_label), values(p.match_weight), oracle::to_mat(p.label_mix));
    auto got = mman::fuse_and_score(f, p);
    for (std::size_t c = 0; c < labels; ++c) s.max_error = std::max(s.max_error, scaled_error(got[c], want[c]));
  }
  return s;
}

inline Sweep sweep_multilabel_loss(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::bernoulli_distribution coin(0.5);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t labels = pick(gen, 1, 12);
    auto z = oracle::random_tensor({labels}, gen, 10.0, false);
    std::vector<double> y(labels);
    for (auto& v : y) v = coin(gen) ? 1.0 : 0.0;
    s.max_error = std::max(s.max_error, scaled_error(mman::multilabel_loss(z, y).item(), oracle::naive_bce(values(z), y)));
  }
  return s;
}

// One conv block and one pool on L_q = L_c = 6, composed by hand from the
// loop oracles and a plain projection.
inline Sweep sweep_char_match(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  Sweep s;
  for (; s.instances < n; ++s.instances) {
    const std::size_t cats = pick(gen, 1, 3), filters = pick(gen, 1, 4), d = pick(gen, 1, 5);
    mman::CharMatchParams p;
    p.blocks.push_back({oracle::random_tensor({filters, 1, 3, 3}, gen, 1.0, false),
                        oracle::random_tensor({filters}, gen, 1.0, false)});
    const std::size_t flat = filters * 2 * 2;
    p.projection = oracle::random_tensor({flat, d}, gen, 1.0, false);
    auto maps = oracle::random_tensor({cats, 6, 6}, gen, 1.0, false);
    auto got = mman::char_match(maps, p);
    auto all = values(maps);
    for (std::size_t j = 0; j < cats; ++j) {
      oracle::Vec one(all.begin() + static_cast<std::ptrdiff_t>(j * 36), all.begin() + static_cast<std::ptrdiff_t>((j + 1) * 36));
      std::size_t oh = 0, ow = 0, ph = 0, pw = 0;
      auto conv = oracle::conv2d(one, 1, 6, 6, values(p.blocks[0].kernels), filters, 3, 3, values(p.blocks[0].bias), 1, 1,
                                 oh, ow);
      for (auto& v : conv) v = std::max(v, 0.0);
      auto pooled = oracle::maxpool2d(conv, filters, oh, ow, 2, 2, 2, 2, ph, pw);
      for (std::size_t k = 0; k < d; ++k) {
        double want = 0.0;
        for (std::size_t i = 0; i < flat; ++i) want += pooled[i] * p.projection.at(i, k);
        s.max_error = std::max(s.max_error, scaled_error(got.at(j, k), want));
      }
    }
  }
  return s;
}

/// L_q=6, L_c=8, |C|=3, d=8, one encoder layer, one conv block.
inline mman::ModelConfig tiny_config(mman::Variant variant = mman::Variant::kFull) {
  mman::ModelConfig c;
  c.vocab_size = 12;
  c.num_categories = 3;
  c.dim = 8;
  c.query_length = 6;
  c.category_length = 8;
  c.encoder_layers = 1;
  c.heads = 2;
  c.ff_width = 16;
  c.conv_filters = 4;
  c.conv_blocks = 1;
  c.variant = variant;
  return c;
}

inline std::vector<mman::TokenSequence> tiny_categories() {
  return {mman::pad_ids({2, 3, 4, 5, 6}, 8), mman::pad_ids({7, 8, 9}, 8), mman::pad_ids({10, 11, 2, 7, 5, 3, 9, 4}, 8)};
}

struct GradientReport {
  double max_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t nonzero = 0;  // scalars whose analytic gradient is not exactly 0
};

/// Analytic gradient of one example's loss against central differences for
/// every scalar of every parameter. A dead fusion gate zeroes every gradient,
/// so callers should also require a healthy `nonzero` count.
inline GradientReport check_model_gradients(const mman::Model& model, const mman::TokenSequence& query,
                                            const std::vector<mman::TokenSequence>& categories,
                                            const std::vector<double>& labels, double h = 1e-5, double floor = 1e-6) {
  auto params = model.parameters();
  for (auto& p : params) p.value.zero_grad();
  mman::backward(mman::multilabel_loss(model.forward(query, categories), labels));
  auto loss = [&] {
    mman::NoGradGuard guard;
    return mman::multilabel_loss(model.forward(query, categories), labels).item();
  };
  GradientReport report;
  for (auto& p : params) {
    std::vector<double> analytic(p.value.grad().begin(), p.value.grad().end());
    auto numeric = oracle::central_differences(p.value, loss, h);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double e = oracle::relative_error(analytic[i], numeric[i], floor);
      if (e > report.max_error) {
        report.max_error = e;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
      ++report.checked;
      report.nonzero += analytic[i] != 0.0;
    }
  }
  return report;
}

}  // namespace checks
