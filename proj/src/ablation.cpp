#include "mman/ablation.hpp"

#include <cstdio>
#include <sstream>

namespace mman {

std::vector<AblationRow> run_ablation_suite(const ModelConfig& base, std::uint64_t model_seed,
                                            const TrainConfig& train_config,
                                            const std::vector<TokenSequence>& categories,
                                            const std::vector<LabeledQuery>& train_data,
                                            const std::vector<LabeledQuery>& test_data) {
  std::vector<AblationRow> rows;
  for (Variant v : {Variant::kFull, Variant::kNoSelf, Variant::kNoChar, Variant::kNoSemantic}) {
    ModelConfig config = base;
    config.variant = v;
    Model model(config, model_seed);
    AblationRow row;
    row.variant = v;
    row.parameter_count = model.parameter_count();
    row.epoch_losses = train(model, categories, train_data, train_config).epoch_losses;
    row.report = evaluate(model, categories, test_data, train_config.threshold);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char buf[200];
  out << "# " << kMacroConvention << "\n";
  std::snprintf(buf, sizeof buf, "%-14s | %8s %8s %8s | %8s %8s %8s | %10s\n", "model", "micro-P", "micro-R",
                "micro-F1", "macro-P", "macro-R", "macro-F1", "params");
  out << buf;
  for (const auto& r : rows) {
    const auto& m = r.report;
    std::snprintf(buf, sizeof buf, "%-14s | %8.2f %8.2f %8.2f | %8.2f %8.2f %8.2f | %10zu\n",
                  std::string(to_string(r.variant)).c_str(), 100 * m.micro.precision, 100 * m.micro.recall,
                  100 * m.micro.f1, 100 * m.macro.precision, 100 * m.macro.recall, 100 * m.macro.f1,
                  r.parameter_count);
    out << buf;
  }
  return out.str();
}

}  // namespace mman
