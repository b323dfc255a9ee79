#pragma once

// Prototype-driven feature representation and fusion: prototype-gated
// activation maps per (modality, region), per-modality assembly of the three
// highlighted maps, and attention fusion of the four modalities.

#include <array>

#include "protoseg/model/ctp.hpp"

namespace protoseg::model {

struct DriveResult {
  Var activation;   // A >= 0, C' channels (or 1 channel)
  Var highlighted;  // F~ * A
};

class Pfrf {
 public:
  Pfrf() = default;
  Pfrf(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng);

  /// Linear map of the prototype, broadcast to F~'s grid, concatenated with
  /// F~, 1x1x1 conv + ReLU gives A; highlighted = F~ * A.
  DriveResult drive_with_prototype(int modality, int region, const Var& features, const Var& prototype) const;
  /// concat(h_ncr, h_ed, h_et) -> 3x3x3 conv -> 1x1x1 conv, giving F^h.
  Var assemble(int modality, const std::array<Var, kNumRegions>& highlighted) const;
  /// concat of the four F^h -> tokens -> MHSA (+ residual) -> volume.
  Var fuse(const std::array<Var, 4>& modal, Tensor* probs = nullptr) const;

  int token_width = 0;
  int modal_width = 0;
  bool single_channel = false;
  bool residual = true;

 private:
  struct Drive {
    nn::Linear map;
    nn::Conv3d gate;
  };
  std::array<std::array<Drive, kNumRegions>, 4> drives_;
  std::array<nn::Conv3d, 4> assemble_spatial_, assemble_mix_;
  nn::MultiHeadAttention fusion_;
};

}  // namespace protoseg::model
