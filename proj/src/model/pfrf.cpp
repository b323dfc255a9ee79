#include "protoseg/model/pfrf.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::model {
namespace {

const char* kModalityKeys[] = {"flair", "t1c", "t1", "t2"};
const char* kRegionKeys[] = {"ncr", "ed", "et"};

}  // namespace

Pfrf::Pfrf(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng)
    : token_width(cfg.resolved_token_width()),
      modal_width(cfg.width(kNumLevels)),
      single_channel(cfg.single_channel_activation),
      residual(cfg.fusion_residual) {
  const int tw = token_width;
  for (std::size_t m = 0; m < 4; ++m) {
    const std::string pm = path + "." + kModalityKeys[m];
    for (std::size_t r = 0; r < kNumRegions; ++r) {
      const std::string p = pm + ".drive_" + kRegionKeys[r];
      drives_[m][r].map = nn::Linear(store, p + ".map", tw, tw, true, rng);
      drives_[m][r].gate = nn::Conv3d(store, p + ".gate", 2 * tw, single_channel ? 1 : tw, 1, 1, rng);
    }
    assemble_spatial_[m] = nn::Conv3d(store, pm + ".assemble.spatial", 3 * tw, tw, 3, 1, rng);
    assemble_mix_[m] = nn::Conv3d(store, pm + ".assemble.mix", tw, modal_width, 1, 1, rng);
  }
  fusion_ = nn::MultiHeadAttention(store, path + ".fusion", 4 * modal_width, cfg.heads, true, rng);
}

DriveResult Pfrf::drive_with_prototype(int m, int r, const Var& features, const Var& prototype) const {
  require_volume(features.value(), "drive_with_prototype features");
  if (prototype.value().rank() != 1 || prototype.value().dim(0) != token_width ||
      features.value().channels() != token_width)
    throw ShapeError("drive_with_prototype: prototype " + to_string(prototype.shape()) + ", features " +
                     to_string(features.shape()) + ", expected width " + std::to_string(token_width));
  const Drive& d = drives_.at(static_cast<std::size_t>(m)).at(static_cast<std::size_t>(r));
  const Var mapped = ag::reshape(d.map(ag::reshape(prototype, {1, token_width})), {token_width});
  const Var grid = ag::broadcast_to_volume(mapped, features.value().spatial());
  const Var a = ag::relu(d.gate(ag::concat_channels({grid, features})));
  const Var h = single_channel ? ag::mul_channel_broadcast(features, a) : ag::mul(features, a);
  return {a, h};
}

Var Pfrf::assemble(int m, const std::array<Var, kNumRegions>& h) const {
  for (const Var& x : h)
    if (x.shape() != h[0].shape()) throw ShapeError("assemble: highlighted maps differ in shape");
  const auto i = static_cast<std::size_t>(m);
  return assemble_mix_.at(i)(assemble_spatial_.at(i)(ag::concat_channels({h[0], h[1], h[2]})));
}

Var Pfrf::fuse(const std::array<Var, 4>& modal, Tensor* probs) const {
  for (const Var& x : modal)
    if (x.shape() != modal[0].shape()) throw ShapeError("fuse: modality features differ in shape");
  const Dims3 grid = modal[0].value().spatial();
  const Var tokens = ag::volume_to_tokens(ag::concat_channels({modal[0], modal[1], modal[2], modal[3]}));
  Var attended = fusion_.self(tokens, probs);
  if (residual) attended = ag::add(tokens, attended);
  return ag::tokens_to_volume(attended, grid);
}

}  // namespace protoseg::model
