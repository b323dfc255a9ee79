#include "protoseg/model/backbone.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::model {

void require_divisible_by_16(Dims3 d) {
  for (int e : {d.h, d.w, d.d})
    if (e <= 0 || e % 16 != 0) throw ShapeError("spatial extent " + to_string(d) + " is not divisible by 16");
}

Encoder::Encoder(nn::ParamStore& store, const std::string& path, int in_ch, const ModelConfig& cfg, Rng& rng)
    : in_channels(in_ch) {
  int prev = in_ch;
  for (int l = 1; l <= kNumLevels; ++l) {
    const std::string p = path + ".block" + std::to_string(l);
    const int w = cfg.width(l);
    auto& b = blocks_[static_cast<std::size_t>(l - 1)];
    b[0] = nn::ConvUnit(store, p + ".unit0", prev, w, l == 1 ? 1 : 2, cfg.negative_slope, rng);
    b[1] = nn::ConvUnit(store, p + ".unit1", w, w, 1, cfg.negative_slope, rng);
    prev = w;
  }
}

Ladder Encoder::operator()(const Var& x) const {
  require_volume(x.value(), "encoder input");
  if (x.value().channels() != in_channels)
    throw ShapeError("encoder expects " + std::to_string(in_channels) + " input channels, got " + to_string(x.shape()));
  require_divisible_by_16(x.value().spatial());
  Ladder out;
  Var h = x;
  for (std::size_t l = 0; l < kNumLevels; ++l) {
    h = blocks_[l][1](blocks_[l][0](h));
    out[l] = h;
  }
  return out;
}

Decoder::Decoder(nn::ParamStore& store, const std::string& path, int bottleneck, std::array<int, kNumLevels - 1> skips,
                 const ModelConfig& cfg, Rng& rng, bool block_heads)
    : bottleneck_channels(bottleneck), skip_channels(skips), block_heads_(block_heads) {
  const double slope = cfg.negative_slope;
  for (int l = kNumLevels; l >= 1; --l) {
    const std::string p = path + ".block" + std::to_string(l);
    const int w = cfg.width(l);
    auto& b = blocks_[static_cast<std::size_t>(l - 1)];
    if (l == kNumLevels) {
      b[0] = nn::ConvUnit(store, p + ".unit0", bottleneck, w, 1, slope, rng);
    } else {
      up_[static_cast<std::size_t>(l - 1)] = nn::ConvUnit(store, p + ".up", cfg.width(l + 1), w, 1, slope, rng);
      b[0] = nn::ConvUnit(store, p + ".unit0", w + skips[static_cast<std::size_t>(l - 1)], w, 1, slope, rng);
    }
    b[1] = nn::ConvUnit(store, p + ".unit1", w, w, 1, slope, rng);
    if (block_heads || l == 1)
      heads_[static_cast<std::size_t>(l - 1)] = nn::Conv3d(store, p + ".head", w, 4, 1, 1, rng);
  }
}

DecoderOutput Decoder::operator()(const Var& bottleneck, const std::array<Var, kNumLevels - 1>& skips,
                                  bool supervision) const {
  require_volume(bottleneck.value(), "decoder bottleneck");
  if (bottleneck.value().channels() != bottleneck_channels)
    throw ShapeError("decoder bottleneck expects " + std::to_string(bottleneck_channels) + " channels, got " +
                     to_string(bottleneck.shape()));
  DecoderOutput out;
  const auto& b5 = blocks_[kNumLevels - 1];
  Var h = b5[1](b5[0](bottleneck));
  supervision = supervision && block_heads_;
  if (supervision) out.block_probabilities[kNumLevels - 1] = ag::softmax_channels(heads_[kNumLevels - 1](h));
  for (int l = kNumLevels - 1; l >= 1; --l) {
    const auto i = static_cast<std::size_t>(l - 1);
    const Var& skip = skips[i];
    require_volume(skip.value(), "decoder skip");
    const Dims3 d = h.value().spatial();
    const Dims3 target{2 * d.h, 2 * d.w, 2 * d.d};
    if (!(skip.value().spatial() == target) || skip.value().channels() != skip_channels[i])
      throw ShapeError("level-" + std::to_string(l) + " skip is " + to_string(skip.shape()) + ", expected " +
                       std::to_string(skip_channels[i]) + " channels at " + to_string(target));
    const Var up = up_[i](ag::resize_trilinear(h, target));
    h = blocks_[i][1](blocks_[i][0](ag::concat_channels({up, skip})));
    if (supervision && l > 1) out.block_probabilities[i] = ag::softmax_channels(heads_[i](h));
  }
  out.probabilities = ag::softmax_channels(heads_[0](h));
  if (supervision) out.block_probabilities[0] = out.probabilities;
  return out;
}

std::size_t count_parameters(const nn::ParamStore& store) { return store.count_scalars(); }

}  // namespace protoseg::model
