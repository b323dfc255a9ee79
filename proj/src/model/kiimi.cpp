#include "protoseg/model/kiimi.hpp"

#include "protoseg/core/error.hpp"

namespace protoseg::model {
namespace {

void require_expert_level(int level) {
  if (level < 1 || level > kNumLevels - 1)
    throw LevelError("expert heads exist for levels 1..4, got level " + std::to_string(level));
}

}  // namespace

Kiimi::Kiimi(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng) {
  for (int l = 1; l < kNumLevels; ++l) {
    const std::string p = path + ".level" + std::to_string(l);
    const int w = cfg.width(l);
    Expert& e = experts_[static_cast<std::size_t>(l - 1)];
    e.classify = nn::Conv3d(store, p + ".classify", w, 4, 1, 1, rng);
    e.spatial = nn::Conv3d(store, p + ".integrate.spatial", 3 * w, w, 3, 1, rng);
    e.restore = nn::Conv3d(store, p + ".integrate.restore", w, w, 1, 1, rng);
  }
}

const Kiimi::Expert& Kiimi::expert(int level) const {
  require_expert_level(level);
  return experts_[static_cast<std::size_t>(level - 1)];
}

Var Kiimi::expert_region_maps(int level, const Var& feature) const {
  return ag::softmax_channels(expert(level).classify(feature));
}

Var Kiimi::integrate(int level, const Var& feature, const Var& maps) const {
  const Expert& e = expert(level);
  require_volume(maps.value(), "expert maps");
  if (!(maps.value().spatial() == feature.value().spatial()) || maps.value().channels() != 4)
    throw ShapeError("integrate: maps " + to_string(maps.shape()) + " vs features " + to_string(feature.shape()));
  std::vector<Var> masked;
  for (int r = 1; r <= 3; ++r) masked.push_back(ag::mul_channel_broadcast(feature, ag::slice_channels(maps, r, 1)));
  return e.restore(e.spatial(ag::concat_channels(masked)));
}

Var Kiimi::build_skip(int level, const std::array<Var, 4>& feats, const Var& expert_feature) {
  require_expert_level(level);
  for (const Var& f : feats)
    if (!(f.value().spatial() == expert_feature.value().spatial()))
      throw ShapeError("build_skip: level-" + std::to_string(level) + " maps differ in spatial extent");
  return ag::concat_channels({feats[0], feats[1], feats[2], feats[3], expert_feature});
}

}  // namespace protoseg::model
