#pragma once

// Per-level expert heads on the concatenated-input encoder: region maps at
// levels 1..4, region-masked feature integration, and the decoder skips.

#include <array>

#include "protoseg/model/backbone.hpp"

namespace protoseg::model {

class Kiimi {
 public:
  Kiimi() = default;
  Kiimi(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng);

  /// 1x1x1 conv to 4 channels and softmax at the feature's resolution.
  Var expert_region_maps(int level, const Var& feature) const;
  /// conv3x3x3 then width-restoring conv1x1x1 over
  /// [F * P_ncr; F * P_ed; F * P_et].
  Var integrate(int level, const Var& feature, const Var& maps) const;
  /// [F_flair; F_t1c; F_t1; F_t2; F_e] on channels.
  static Var build_skip(int level, const std::array<Var, 4>& modality_features, const Var& expert_feature);

 private:
  struct Expert {
    nn::Conv3d classify, spatial, restore;
  };
  const Expert& expert(int level) const;
  std::array<Expert, kNumLevels - 1> experts_;
};

}  // namespace protoseg::model
