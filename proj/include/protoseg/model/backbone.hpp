#pragma once

#include <array>
#include <string>

#include "protoseg/model/config.hpp"
#include "protoseg/nn/layers.hpp"

namespace protoseg::model {

using ag::Var;

/// Five feature maps, index 0 = level 1 (full resolution).
using Ladder = std::array<Var, kNumLevels>;

/// Throws ShapeError unless every spatial extent is a positive multiple of 16.
void require_divisible_by_16(Dims3 dims);

/// Five blocks of two (conv 3x3x3, instance norm, LeakyReLU) units; blocks
/// 2..5 open with a stride-2 convolution.
class Encoder {
 public:
  Encoder() = default;
  Encoder(nn::ParamStore& store, const std::string& path, int in_channels, const ModelConfig& cfg, Rng& rng);
  Ladder operator()(const Var& x) const;

  int in_channels = 1;

 private:
  std::array<std::array<nn::ConvUnit, 2>, kNumLevels> blocks_;
};

struct DecoderOutput {
  /// Final 4-class probability field at input resolution.
  Var probabilities;
  /// Per-block supervision fields, index 0 = block 1 (full resolution),
  /// index 4 = block 5 (bottleneck resolution); index 0 is the same field
  /// as `probabilities`. Empty without supervision.
  std::array<Var, kNumLevels> block_probabilities;
};

/// Block 5 works at bottleneck resolution; blocks 4..1 each upsample the
/// previous block's features x2 (trilinear), convolve, concatenate the skip
/// of their level and apply two conv units. Every block owns a 1x1x1
/// supervision head; block 1's head is also the final output head.
/// Without `block_heads` only that final head exists.
class Decoder {
 public:
  Decoder() = default;
  Decoder(nn::ParamStore& store, const std::string& path, int bottleneck_channels,
          std::array<int, kNumLevels - 1> skip_channels, const ModelConfig& cfg, Rng& rng, bool block_heads = true);
  /// `skips[l-1]` is the level-l skip, l = 1..4.
  DecoderOutput operator()(const Var& bottleneck, const std::array<Var, kNumLevels - 1>& skips,
                           bool supervision) const;

  int bottleneck_channels = 0;
  std::array<int, kNumLevels - 1> skip_channels{};

 private:
  std::array<nn::ConvUnit, kNumLevels - 1> up_;
  std::array<std::array<nn::ConvUnit, 2>, kNumLevels> blocks_;
  std::array<nn::Conv3d, kNumLevels> heads_;
  bool block_heads_ = true;
};

/// Total scalar count of every parameter in the store.
std::size_t count_parameters(const nn::ParamStore& store);

}  // namespace protoseg::model
