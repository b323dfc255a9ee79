#pragma once

#include <cstdint>

#include "protoseg/data/augment.hpp"
#include "protoseg/loss/losses.hpp"
#include "protoseg/model/config.hpp"

namespace protoseg::train {

struct TrainConfig {
  double base_lr = 2e-4;
  int total_epochs = 50;
  double poly_power = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-5;
  /// Decoupled (true) or L2 added to the gradient (false).
  bool decoupled_weight_decay = true;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip_norm = 0.0;
  Dims3 crop{32, 32, 32};
  int batch_size = 1;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Steps between checkpoints; 0 keeps only the final one.
  int checkpoint_every = 0;
  /// Epochs between validation passes; 0 disables.
  int validate_every = 0;
  bool tta_enabled = false;

  model::ModelConfig model;
  loss::LossConfig loss;
  data::AugmentPolicy augment_policy;

  /// Throws ConfigError / RangeError for invalid settings.
  void validate() const;
  /// Augmentation policy with the crop size and seed of this config.
  data::AugmentPolicy resolved_augment_policy() const;
};

}  // namespace protoseg::train
