#pragma once

// Binary checkpoint: "PSEGCKPT", u32 version, u64 header length, JSON header,
// then per parameter (header order) value, Adam m and Adam v as raw
// little-endian doubles, then a CRC32 of everything before it.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "protoseg/model/network.hpp"
#include "protoseg/train/trainer.hpp"

namespace protoseg::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  nlohmann::json header;
  /// names/shapes in header["params"]; three tensors per parameter.
  std::vector<Tensor> values, first_moments, second_moments;
  bool has_moments = false;
};

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const TrainConfig& cfg);

/// Reads and validates magic, version (CheckpointVersionError) and CRC
/// (CheckpointCorrupt). Does not touch any live state.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies a checkpoint into `state`. Everything is validated first, so a
/// ConfigMismatch leaves `state` untouched.
void restore_state(const Checkpoint& ckpt, TrainState& state, const TrainConfig& cfg);

/// Network rebuilt from the checkpoint's own model config.
model::Network load_network(const std::filesystem::path& path, TrainConfig* config_out = nullptr);

/// Loads parameters into an existing network; ConfigMismatch when its
/// architecture differs.
void load_parameters(const Checkpoint& ckpt, model::Network& net);

}  // namespace protoseg::train
