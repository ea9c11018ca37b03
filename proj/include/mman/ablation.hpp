#pragma once

#include <string>
#include <vector>

#include "mman/metrics.hpp"
#include "mman/model_config.hpp"
#include "mman/trainer.hpp"

namespace mman {

struct AblationRow {
  Variant variant = Variant::kFull;
  std::size_t parameter_count = 0;
  std::vector<double> epoch_losses;
  MetricsReport report;
};

/// Trains and evaluates the full model and each single-branch ablation with
/// the same seed and settings. Rows come back in the order full, no_self,
/// no_char, no_semantic.
std::vector<AblationRow> run_ablation_suite(const ModelConfig& base, std::uint64_t model_seed,
                                            const TrainConfig& train_config,
                                            const std::vector<TokenSequence>& categories,
                                            const std::vector<LabeledQuery>& train_data,
                                            const std::vector<LabeledQuery>& test_data);

/// Micro and macro precision/recall/F1 per variant, one row each.
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace mman
