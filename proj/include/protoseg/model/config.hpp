#pragma once

#include <cstdint>
#include <string>

namespace protoseg::model {

inline constexpr int kNumLevels = 5;

struct ModelConfig {
  int base_channels = 4;
  /// Bottleneck token width C'; 0 selects 16 * base_channels.
  int token_width = 0;
  int heads = 8;
  double negative_slope = 0.01;
  double ffn_dropout = 0.1;
  /// Hidden width of the region-map FFN; 0 selects 2 * C'.
  int ffn_hidden = 0;
  /// Prototype denominator: false divides by the voxel count, true by the map mass.
  bool prototype_masked_average = false;
  /// Activation maps with one channel broadcast over C' instead of C' channels.
  bool single_channel_activation = false;
  bool fusion_residual = true;
  /// false builds the plain U-Net baseline: four modality encoders, concatenated
  /// bottleneck and skips, no CTP/PFRF/KIIMI, deep supervision only.
  bool full_model = true;
  std::uint64_t init_seed = 0;

  int width(int level) const { return base_channels << (level - 1); }
  int resolved_token_width() const { return token_width > 0 ? token_width : 16 * base_channels; }
  int resolved_ffn_hidden() const { return ffn_hidden > 0 ? ffn_hidden : 2 * resolved_token_width(); }
  /// Throws ConfigError on invalid combinations.
  void validate() const;
  /// Stable string of every field that changes parameter shapes or graph wiring.
  std::string fingerprint() const;
};

}  // namespace protoseg::model
