#include "mman/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mman {

LabelVector decide(std::span<const double> logits, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("decision threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  LabelVector out(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double z = logits[c];
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    out[c] = p >= threshold ? 1 : 0;
  }
  return out;
}

LabelVector to_label_vector(std::span<const double> labels) {
  LabelVector out(labels.size());
  for (std::size_t c = 0; c < labels.size(); ++c) out[c] = labels[c] > 0.5 ? 1 : 0;
  return out;
}

PrecisionRecall score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecall s;
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

MetricsReport compute_metrics(const std::vector<LabelVector>& predictions, const std::vector<LabelVector>& golds,
                              double threshold) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(golds.size()) + " gold label sets");
  }
  MetricsReport report;
  report.threshold = threshold;
  report.examples = golds.size();
  if (golds.empty()) return report;
  const std::size_t labels = golds[0].size();
  report.per_category.resize(labels);
  for (std::size_t n = 0; n < golds.size(); ++n) {
    if (golds[n].size() != labels || predictions[n].size() != labels) {
      throw std::invalid_argument("compute_metrics: example " + std::to_string(n) + " has " +
                                  std::to_string(predictions[n].size()) + " predicted / " +
                                  std::to_string(golds[n].size()) + " gold labels, expected " + std::to_string(labels));
    }
    for (std::size_t c = 0; c < labels; ++c) {
      auto& cat = report.per_category[c];
      const bool p = predictions[n][c] != 0, g = golds[n][c] != 0;
      if (p && g) ++cat.tp;
      if (p && !g) ++cat.fp;
      if (!p && g) ++cat.fn;
    }
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (auto& cat : report.per_category) {
    cat.score = score_counts(cat.tp, cat.fp, cat.fn);
    tp += cat.tp;
    fp += cat.fp;
    fn += cat.fn;
    report.macro.precision += cat.score.precision;
    report.macro.recall += cat.score.recall;
    report.macro.f1 += cat.score.f1;
  }
  report.micro = score_counts(tp, fp, fn);
  const auto n = static_cast<double>(labels);
  report.macro.precision /= n;
  report.macro.recall /= n;
  report.macro.f1 /= n;
  return report;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_report_table(const MetricsReport& report, const std::string& run_config) {
  std::ostringstream out;
  out << "# threshold=" << report.threshold << " (sigmoid >= threshold predicts a label)\n";
  out << "# " << kMacroConvention << "\n";
  out << "# examples=" << report.examples << "\n";
  std::istringstream cfg(run_config);
  for (std::string line; std::getline(cfg, line);) {
    if (!line.empty()) out << "# config " << line << "\n";
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", "scope", "precision", "recall", "f1");
  out << buf;
  for (auto [name, s] : {std::pair{"micro", report.micro}, std::pair{"macro", report.macro}}) {
    std::snprintf(buf, sizeof buf, "%-10s %10s %10s %10s\n", name, fixed(s.precision).c_str(),
                  fixed(s.recall).c_str(), fixed(s.f1).c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof buf, "%-10s %6s %6s %6s %10s %10s %10s\n", "category", "tp", "fp", "fn", "precision",
                "recall", "f1");
  out << buf;
  for (std::size_t c = 0; c < report.per_category.size(); ++c) {
    const auto& cat = report.per_category[c];
    std::snprintf(buf, sizeof buf, "%-10zu %6zu %6zu %6zu %10s %10s %10s\n", c, cat.tp, cat.fp, cat.fn,
                  fixed(cat.score.precision).c_str(), fixed(cat.score.recall).c_str(), fixed(cat.score.f1).c_str());
    out << buf;
  }
  return out.str();
}

std::string format_report_records(const MetricsReport& report) {
  std::ostringstream out;
  auto emit = [&](const std::string& scope, const std::string& cat, const std::string& metric, const std::string& v) {
    out << scope << '\t' << cat << '\t' << metric << '\t' << v << '\n';
  };
  emit("meta", "-", "threshold", exact(report.threshold));
  emit("meta", "-", "examples", std::to_string(report.examples));
  emit("meta", "-", "macro_convention", "mean_of_per_category_f1");
  for (auto [name, s] : {std::pair{"micro", report.micro}, std::pair{"macro", report.macro}}) {
    emit(name, "-", "precision", exact(s.precision));
    emit(name, "-", "recall", exact(s.recall));
    emit(name, "-", "f1", exact(s.f1));
  }
  for (std::size_t c = 0; c < report.per_category.size(); ++c) {
    const auto& cat = report.per_category[c];
    const std::string id = std::to_string(c);
    emit("category", id, "tp", std::to_string(cat.tp));
    emit("category", id, "fp", std::to_string(cat.fp));
    emit("category", id, "fn", std::to_string(cat.fn));
    emit("category", id, "precision", exact(cat.score.precision));
    emit("category", id, "recall", exact(cat.score.recall));
    emit("category", id, "f1", exact(cat.score.f1));
  }
  return out.str();
}

}  // namespace mman
