#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mman/encoder.hpp"
#include "mman/model.hpp"
#include "mman/model_config.hpp"
#include "mman/optim.hpp"
#include "mman/text.hpp"

namespace mman {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointConfigError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers and reals little-endian:
//   "MMAN" | u32 version | u64 n | n bytes of config text
//   | u32 tensor count | per tensor: u32 n, name, u32 rank, u64 dims[rank], u64 count, f64[count]
//   | u8 has_optimizer | [u64 step, f64 lr, beta1, beta2, eps, per tensor: u64 count, f64 m[count], u64 count, f64 v[count]]
// The config text is ModelConfig::to_text() followed by the vocabulary and
// category fingerprints and the `run.`-prefixed run configuration lines.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t categories_fingerprint = 0;
  std::string run_config;  // `key=value` lines
  std::vector<NamedTensor> tensors;
  std::optional<AdamState> optimizer;

  std::string config_text() const;
};

Checkpoint make_checkpoint(const Model& model, const Vocab& vocab, const CategorySet& categories,
                           std::string run_config, const AdamState* optimizer = nullptr);

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model described by the checkpoint with its stored weights.
Model restore_model(const Checkpoint& checkpoint);

/// Throws CheckpointConfigError when the label space or vocabulary differ
/// from the ones the checkpoint was trained with.
void check_compatible(const Checkpoint& checkpoint, const Vocab& vocab, const CategorySet& categories);

}  // namespace mman
