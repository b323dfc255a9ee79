#include "protoseg/nn/layers.hpp"

#include <cmath>

#include "protoseg/core/error.hpp"

namespace protoseg::nn {

Conv3d::Conv3d(ParamStore& store, const std::string& path, int in_channels, int out_channels, int kernel,
               int stride_, Rng& rng)
    : stride(stride_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels) * kernel * kernel * kernel);
  weight = store.uniform(path + ".weight", {out_channels, in_channels, kernel, kernel, kernel}, bound, rng);
  bias = store.uniform(path + ".bias", {out_channels}, bound, rng);
}

Linear::Linear(ParamStore& store, const std::string& path, int in, int out, bool with_bias, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = store.uniform(path + ".weight", {in, out}, bound, rng);
  if (with_bias) bias = store.uniform(path + ".bias", {out}, bound, rng);
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& path, int width) {
  gamma = store.constant(path + ".gamma", {width}, 1.0);
  beta = store.constant(path + ".beta", {width}, 0.0);
}

ConvUnit::ConvUnit(ParamStore& store, const std::string& path, int in_channels, int out_channels, int stride,
                   double slope, Rng& rng)
    : conv(store, path + ".conv", in_channels, out_channels, 3, stride, rng), negative_slope(slope) {}

Var ConvUnit::operator()(const Var& x) const {
  return ag::leaky_relu(ag::instance_norm(conv(x)), negative_slope);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& path, int width, int heads_,
                                       bool shared_norm_, Rng& rng)
    : heads(heads_), shared_norm(shared_norm_) {
  if (heads <= 0 || width % heads != 0)
    throw ConfigError("token width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  norm_q = LayerNorm(store, path + (shared_norm ? ".norm" : ".norm_q"), width);
  norm_kv = shared_norm ? norm_q : LayerNorm(store, path + ".norm_kv", width);
  q = Linear(store, path + ".q", width, width, false, rng);
  k = Linear(store, path + ".k", width, width, false, rng);
  v = Linear(store, path + ".v", width, width, false, rng);
  out = Linear(store, path + ".out", width, width, true, rng);
}

Var MultiHeadAttention::operator()(const Var& current, const Var& other, Tensor* probs) const {
  if (current.value().rank() != 2 || other.value().rank() != 2 || current.value().dim(1) != other.value().dim(1))
    throw ShapeError("attention: token sequences " + to_string(current.shape()) + " and " +
                     to_string(other.shape()));
  const Var nq = norm_q(current);
  const Var nkv = (shared_norm && current.node() == other.node()) ? nq : norm_kv(other);
  return out(ag::attention(q(nq), k(nkv), v(nkv), heads, probs));
}

}  // namespace protoseg::nn
