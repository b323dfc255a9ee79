#include "protoseg/model/network.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::model {
namespace {

const char* kEncoderKeys[] = {"flair", "t1c", "t1", "t2"};

}  // namespace

Network::Network(const ModelConfig& cfg) : config_(cfg) {
  config_.validate();
  Rng rng(cfg.init_seed);
  for (std::size_t m = 0; m < 4; ++m)
    modality_encoders_[m] = Encoder(params_, std::string("encoder.") + kEncoderKeys[m], 1, cfg, rng);
  const int c5 = cfg.width(kNumLevels);
  if (cfg.full_model) {
    extra_encoder_ = Encoder(params_, "encoder.extra", 4, cfg, rng);
    ctp_ = Ctp(params_, "ctp", cfg, rng);
    pfrf_ = Pfrf(params_, "pfrf", cfg, rng);
    kiimi_ = Kiimi(params_, "kiimi", cfg, rng);
    share_decoder_ = Decoder(params_, "decoder.share", c5, {cfg.width(1), cfg.width(2), cfg.width(3), cfg.width(4)},
                             cfg, rng, false);
    seg_decoder_ = Decoder(params_, "decoder.seg", 4 * c5,
                           {5 * cfg.width(1), 5 * cfg.width(2), 5 * cfg.width(3), 5 * cfg.width(4)}, cfg, rng);
  } else {
    seg_decoder_ = Decoder(params_, "decoder.seg", 4 * c5,
                           {4 * cfg.width(1), 4 * cfg.width(2), 4 * cfg.width(3), 4 * cfg.width(4)}, cfg, rng);
  }
}

ForwardOutput Network::forward(const Var& input, bool training, Rng& rng, bool full_outputs) const {
  require_volume(input.value(), "network input");
  if (input.value().channels() != 4) throw ShapeError("network input must have 4 modalities, got " + to_string(input.shape()));
  require_divisible_by_16(input.value().spatial());

  ForwardOutput out;
  std::array<Var, 4> bottlenecks;
  for (int m = 0; m < 4; ++m) {
    const auto i = static_cast<std::size_t>(m);
    out.modality_features[i] = modality_encoders_[i](ag::slice_channels(input, m, 1));
    bottlenecks[i] = out.modality_features[i][kNumLevels - 1];
  }
  auto level_feats = [&](int level) {
    std::array<Var, 4> f;
    for (std::size_t m = 0; m < 4; ++m) f[m] = out.modality_features[m][static_cast<std::size_t>(level - 1)];
    return f;
  };

  std::array<Var, kNumLevels - 1> seg_skips;
  if (!config_.full_model) {
    for (int l = 1; l < kNumLevels; ++l) {
      const auto f = level_feats(l);
      seg_skips[static_cast<std::size_t>(l - 1)] = ag::concat_channels({f[0], f[1], f[2], f[3]});
    }
    out.fused = ag::concat_channels({bottlenecks[0], bottlenecks[1], bottlenecks[2], bottlenecks[3]});
    out.segmentation = seg_decoder_(out.fused, seg_skips, true);
    return out;
  }

  out.extra_features = extra_encoder_(input);
  out.ctp = ctp_(bottlenecks, training, rng);
  for (int m = 0; m < 4; ++m) {
    const auto i = static_cast<std::size_t>(m);
    std::array<Var, kNumRegions> highlighted;
    for (int r = 0; r < kNumRegions; ++r) {
      const auto j = static_cast<std::size_t>(r);
      out.drives[i][j] = pfrf_.drive_with_prototype(m, r, out.ctp.features[i], out.ctp.prototypes[i][j]);
      highlighted[j] = out.drives[i][j].highlighted;
    }
    out.modal_fused[i] = pfrf_.assemble(m, highlighted);
  }
  out.fused = pfrf_.fuse(out.modal_fused);

  for (int l = 1; l < kNumLevels; ++l) {
    const auto i = static_cast<std::size_t>(l - 1);
    const Var& fe = out.extra_features[i];
    out.expert_maps[i] = kiimi_.expert_region_maps(l, fe);
    out.expert_features[i] = kiimi_.integrate(l, fe, out.expert_maps[i]);
    seg_skips[i] = Kiimi::build_skip(l, level_feats(l), out.expert_features[i]);
  }
  out.segmentation = seg_decoder_(out.fused, seg_skips, full_outputs);

  if (full_outputs) {
    for (std::size_t m = 0; m < 4; ++m) {
      std::array<Var, kNumLevels - 1> skips;
      for (std::size_t l = 0; l < kNumLevels - 1; ++l) skips[l] = out.modality_features[m][l];
      out.share_outputs[m] = share_decoder_(out.modal_fused[m], skips, false).probabilities;
    }
    out.share_outputs[4] =
        share_decoder_(out.extra_features[kNumLevels - 1], out.expert_features, false).probabilities;
  }
  return out;
}

Tensor Network::predict(const Tensor& input) const {
  ag::NoGradGuard guard;
  Rng unused(0);
  return forward(ag::constant(input), false, unused, false).segmentation.probabilities.value();
}

}  // namespace protoseg::model
