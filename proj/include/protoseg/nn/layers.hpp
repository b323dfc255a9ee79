#pragma once

// Parameterized building blocks. Each layer registers its tensors in a
// ParamStore under `path` at construction and holds shared handles to them.

#include <string>

#include "protoseg/autograd/ops.hpp"
#include "protoseg/nn/params.hpp"

namespace protoseg::nn {

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(ParamStore& store, const std::string& path, int in_channels, int out_channels, int kernel,
         int stride, Rng& rng);
  Var operator()(const Var& x) const { return ag::conv3d(x, weight, bias, stride); }

  Var weight, bias;
  int stride = 1;
};

/// Token-wise affine map {N, in} -> {N, out}.
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& path, int in, int out, bool with_bias, Rng& rng);
  Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }

  Var weight, bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& path, int width);
  Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }

  Var gamma, beta;
};

/// conv 3x3x3 -> instance norm -> LeakyReLU.
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(ParamStore& store, const std::string& path, int in_channels, int out_channels, int stride,
           double negative_slope, Rng& rng);
  Var operator()(const Var& x) const;

  Conv3d conv;
  double negative_slope = 0.01;
};

/// Multi-head attention over token sequences. Queries come from
/// LN_q(current), keys and values from LN_kv(other); the concatenated heads
/// go through the output projection. No residual here; callers add it.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  /// `shared_norm` uses one LayerNorm for both sides (self-attention).
  MultiHeadAttention(ParamStore& store, const std::string& path, int width, int heads, bool shared_norm,
                     Rng& rng);
  Var operator()(const Var& current, const Var& other, Tensor* probs = nullptr) const;
  Var self(const Var& tokens, Tensor* probs = nullptr) const { return (*this)(tokens, tokens, probs); }

  LayerNorm norm_q, norm_kv;
  Linear q, k, v, out;
  int heads = 8;
  bool shared_norm = false;
};

}  // namespace protoseg::nn
