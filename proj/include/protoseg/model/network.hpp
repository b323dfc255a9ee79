#pragma once

#include <array>
#include <memory>

#include "protoseg/model/ctp.hpp"
#include "protoseg/model/kiimi.hpp"
#include "protoseg/model/pfrf.hpp"

namespace protoseg::model {

/// Everything one forward pass produces. Fields that belong to the
/// prototype/expert modules stay undefined for the baseline variant.
struct ForwardOutput {
  std::array<Ladder, 4> modality_features;  // E_m, Flair/T1c/T1/T2
  Ladder extra_features;                    // E_e
  CtpOutput ctp;
  std::array<std::array<DriveResult, kNumRegions>, 4> drives;
  std::array<Var, 4> modal_fused;  // F^h per modality
  Var fused;                       // input of D_seg block 5
  std::array<Var, kNumLevels - 1> expert_maps;
  std::array<Var, kNumLevels - 1> expert_features;
  /// D_share outputs: the four prototype branches, then the expert branch.
  std::array<Var, 5> share_outputs;
  DecoderOutput segmentation;  // D_seg
};

/// The full prototype-driven multi-expert network, or the plain U-Net
/// baseline when `config.full_model` is false.
class Network {
 public:
  explicit Network(const ModelConfig& config);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  /// `input` is {4, H, W, D} (Flair, T1c, T1, T2). `rng` drives dropout
  /// when training. `full_outputs` false skips D_share (inference).
  ForwardOutput forward(const Var& input, bool training, Rng& rng, bool full_outputs = true) const;
  /// Plain segmentation probabilities, no gradient recording.
  Tensor predict(const Tensor& input) const;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  Ctp& ctp() { return ctp_; }
  const Ctp& ctp() const { return ctp_; }
  const Pfrf& pfrf() const { return pfrf_; }
  const Kiimi& kiimi() const { return kiimi_; }

 private:
  ModelConfig config_;
  nn::ParamStore params_;
  std::array<Encoder, 4> modality_encoders_;
  Encoder extra_encoder_;
  Ctp ctp_;
  Pfrf pfrf_;
  Kiimi kiimi_;
  Decoder share_decoder_;
  Decoder seg_decoder_;
};

}  // namespace protoseg::model
