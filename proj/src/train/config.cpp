#include "protoseg/train/config.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::train {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (poly_power < 0.0) throw ConfigError("poly_power must be >= 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in (0, 1)");
  if (weight_decay < 0.0 || grad_clip_norm < 0.0) throw ConfigError("weight_decay and grad_clip_norm must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (int e : {crop.h, crop.w, crop.d})
    if (e <= 0 || e % 16 != 0) throw ConfigError("crop " + to_string(crop) + " must be positive multiples of 16");
  model.validate();
  loss.validate();
  resolved_augment_policy().validate();
}

data::AugmentPolicy TrainConfig::resolved_augment_policy() const {
  data::AugmentPolicy p = augment_policy;
  p.crop_size = crop;
  p.seed = seed;
  if (!augment) {
    p.flip_prob = 0.0;
    p.intensity_shift_range = {0.0, 0.0};
    p.scale_range = {1.0, 1.0};
  }
  return p;
}

}  // namespace protoseg::train
