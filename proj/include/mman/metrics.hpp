#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mman/tensor.hpp"

namespace mman {

using LabelVector = std::vector<std::uint8_t>;

inline constexpr const char* kMacroConvention = "macro-F1 = mean of per-category F1";

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct CategoryScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  PrecisionRecall score;
};

struct MetricsReport {
  PrecisionRecall micro;
  PrecisionRecall macro;
  std::vector<CategoryScore> per_category;
  double threshold = 0.5;
  std::size_t examples = 0;
};

/// Predicts label c iff sigmoid(logits[c]) >= threshold.
LabelVector decide(std::span<const double> logits, double threshold);
inline LabelVector decide(const Tensor& logits, double threshold) { return decide(logits.data(), threshold); }

LabelVector to_label_vector(std::span<const double> labels);

/// Precision, recall and F1 from raw counts; each is 0 when its denominator is.
PrecisionRecall score_counts(std::size_t tp, std::size_t fp, std::size_t fn);

MetricsReport compute_metrics(const std::vector<LabelVector>& predictions, const std::vector<LabelVector>& golds,
                              double threshold);

/// Aligned table: headline metrics then one row per category. Header lines
/// start with '#'.
std::string format_report_table(const MetricsReport& report, const std::string& run_config = {});

/// One `scope\tcategory_or_-\tmetric\tvalue` line per number.
std::string format_report_records(const MetricsReport& report);

}  // namespace mman
