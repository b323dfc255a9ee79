#include "protoseg/model/ctp.hpp"

#include <cctype>

#include "protoseg/core/error.hpp"
#include "protoseg/data/case.hpp"

namespace protoseg::model {
namespace {

std::string lower_name(int m) {
  std::string s = data::modality_name(data::kModalities[static_cast<std::size_t>(m)]);
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

// Identity forward, negated backward.
Var flip_gradient(const Var& x) {
  return ag::make_result(x.value(), {x}, [](ag::Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  }, "cross_attend");
}

}  // namespace

Ctp::Ctp(nn::ParamStore& store, const std::string& path, const ModelConfig& cfg, Rng& rng)
    : token_width(cfg.resolved_token_width()), masked_average(cfg.prototype_masked_average), dropout(cfg.ffn_dropout) {
  const int c5 = cfg.width(kNumLevels);
  const int tw = token_width;
  for (int m = 0; m < 4; ++m) {
    const std::string p = path + "." + lower_name(m);
    Branch& b = branches_[static_cast<std::size_t>(m)];
    b.project = nn::Linear(store, p + ".project", c5, tw, true, rng);
    b.self = nn::MultiHeadAttention(store, p + ".self_attention", tw, cfg.heads, true, rng);
    b.ffn_in = nn::Linear(store, p + ".ffn.in", tw, cfg.resolved_ffn_hidden(), true, rng);
    b.ffn_out = nn::Linear(store, p + ".ffn.out", cfg.resolved_ffn_hidden(), tw, true, rng);
    b.head = nn::Conv3d(store, p + ".region_head", tw, 4, 1, 1, rng);
  }
  for (int c = 0; c < 4; ++c)
    for (int o = 0; o < 4; ++o)
      if (c != o)
        cross_[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)] = nn::MultiHeadAttention(
            store, path + ".cross." + lower_name(c) + "_from_" + lower_name(o), tw, cfg.heads, false, rng);
}

Var Ctp::self_attend(int m, const Var& feature, Tensor* probs) const {
  const Branch& b = branches_.at(static_cast<std::size_t>(m));
  const Var tokens = b.project(ag::volume_to_tokens(feature));
  return ag::add(tokens, b.self.self(tokens, probs));
}

Var Ctp::cross_attend(int c, int o, const Var& cur, const Var& other, Tensor* probs) const {
  if (c == o || c < 0 || c > 3 || o < 0 || o > 3) throw ConfigError("cross_attend needs two distinct modalities");
  if (cur.shape() != other.shape())
    throw ShapeError("cross_attend: token sequences " + to_string(cur.shape()) + " and " + to_string(other.shape()));
  Var y = cross_[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)](cur, other, probs);
  return inject_cross_attention_fault ? flip_gradient(y) : y;
}

Var Ctp::aggregate(const Var& current, const std::vector<Var>& cross) {
  if (cross.size() < 3)
    throw ArityError("aggregate_interaction needs 3 cross outputs, got " + std::to_string(cross.size()));
  std::vector<Var> terms(cross.begin(), cross.end());
  terms.push_back(current);
  return ag::add_n(terms);
}

std::pair<Var, Var> Ctp::generate_region_maps(int m, const Var& interacted, Dims3 grid, bool training,
                                              Rng& rng) const {
  const Branch& b = branches_.at(static_cast<std::size_t>(m));
  const Var hidden = ag::dropout(ag::gelu(b.ffn_in(interacted)), dropout, training, rng);
  const Var features = ag::tokens_to_volume(b.ffn_out(hidden), grid);
  return {features, ag::softmax_channels(b.head(features))};
}

Var Ctp::compute_prototype(const Var& features, const Var& map, bool masked) {
  if (!(features.value().spatial() == map.value().spatial()) || map.value().channels() != 1)
    throw ShapeError("compute_prototype: features " + to_string(features.shape()) + ", map " + to_string(map.shape()));
  const Var v = ag::spatial_mean(ag::mul_channel_broadcast(features, map));
  if (!masked) return v;
  return ag::mul_scalar(v, ag::reciprocal(ag::spatial_mean(map), 1e-8));
}

CtpOutput Ctp::operator()(const std::array<Var, 4>& bottlenecks, bool training, Rng& rng) const {
  CtpOutput out;
  const Dims3 grid = bottlenecks[0].value().spatial();
  for (int m = 0; m < 4; ++m) out.self_tokens[static_cast<std::size_t>(m)] = self_attend(m, bottlenecks[static_cast<std::size_t>(m)]);
  for (int c = 0; c < 4; ++c) {
    std::vector<Var> cross;
    for (int o = 0; o < 4; ++o)
      if (o != c)
        cross.push_back(cross_attend(c, o, out.self_tokens[static_cast<std::size_t>(c)], out.self_tokens[static_cast<std::size_t>(o)]));
    const auto ci = static_cast<std::size_t>(c);
    out.interacted[ci] = aggregate(out.self_tokens[ci], cross);
    auto [features, maps] = generate_region_maps(c, out.interacted[ci], grid, training, rng);
    out.features[ci] = features;
    out.region_maps[ci] = maps;
    for (int r = 0; r < kNumRegions; ++r)
      out.prototypes[ci][static_cast<std::size_t>(r)] =
          compute_prototype(features, ag::slice_channels(maps, r + 1, 1), masked_average);
  }
  return out;
}

}  // namespace protoseg::model
