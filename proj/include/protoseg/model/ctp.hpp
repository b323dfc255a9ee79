#pragma once

// Tumor prototype construction on the level-5 features of the four
// modality encoders: per-modality self-attention, pairwise cross-modal
// attention, region probability maps and probability-weighted prototypes.

#include <array>
#include <vector>

#include "protoseg/model/backbone.hpp"

namespace protoseg::model {

inline constexpr int kNumRegions = 3;  // NCR/NET, ED, ET (class channels 1..3)

struct CtpOutput {
  std::array<Var, 4> self_tokens;    // F^sa, {N, C'}
  std::array<Var, 4> interacted;     // sum of cross outputs + F^sa, {N, C'}
  std::array<Var, 4> features;       // F~ as a {C', h, w, d} volume
  std::array<Var, 4> region_maps;    // 4-class probabilities at bottleneck resolution
  std::array<std::array<Var, kNumRegions>, 4> prototypes;  // {C'} each
};

class Ctp {
 public:
  Ctp() = default;
  Ctp(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng);

  /// Tokens of one level-5 feature map projected to C', then
  /// F^sa = P + MHSA(LN(P)).
  Var self_attend(int modality, const Var& feature, Tensor* probs = nullptr) const;
  /// Pair-specific attention with Q from LN(current), K and V from LN(other),
  /// heads concatenated and output-projected.
  Var cross_attend(int current, int other, const Var& current_tokens, const Var& other_tokens,
                   Tensor* probs = nullptr) const;
  /// Sum of the three cross outputs and the current tokens.
  static Var aggregate(const Var& current, const std::vector<Var>& cross);
  /// FFN (linear, GELU, dropout, linear) per token, reshape to a volume,
  /// 1x1x1 conv to 4 channels and softmax. Returns {F~, maps}.
  std::pair<Var, Var> generate_region_maps(int modality, const Var& interacted, Dims3 grid, bool training,
                                           Rng& rng) const;
  /// sum over voxels of F~ * P divided by the voxel count (or by sum P when
  /// `masked_average`).
  static Var compute_prototype(const Var& features, const Var& map, bool masked_average);

  CtpOutput operator()(const std::array<Var, 4>& bottlenecks, bool training, Rng& rng) const;

  int token_width = 0;
  bool masked_average = false;
  double dropout = 0.1;
  /// Flips the sign of the cross-attention output gradient; used only by the
  /// verification suite's fault injection.
  bool inject_cross_attention_fault = false;

 private:
  struct Branch {
    nn::Linear project;
    nn::MultiHeadAttention self;
    nn::Linear ffn_in, ffn_out;
    nn::Conv3d head;
  };
  std::array<Branch, 4> branches_;
  std::array<std::array<nn::MultiHeadAttention, 4>, 4> cross_;  // [current][other], diagonal unused
};

}  // namespace protoseg::model
