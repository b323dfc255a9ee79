#pragma once

// Differentiable operations. Volumes are {C, H, W, D}; token sequences are
// {N, C}; vectors {C}; scalars {1}.

#include <vector>

#include "protoseg/autograd/var.hpp"
#include "protoseg/core/rng.hpp"

namespace protoseg::ag {

Var constant(Tensor value);
Var parameter(Tensor value);

// Elementwise
Var add(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& xs);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var leaky_relu(const Var& x, double negative_slope);
Var relu(const Var& x);
/// Exact (erf) GELU.
Var gelu(const Var& x);
/// Inverted dropout; identity when `training` is false or rate is 0.
Var dropout(const Var& x, double rate, bool training, Rng& rng);
Var sum(const Var& x);
/// x * s for a single-element s.
Var mul_scalar(const Var& x, const Var& s);
/// 1 / (x + eps), elementwise.
Var reciprocal(const Var& x, double eps = 0.0);
/// Same values, new shape of equal element count.
Var reshape(const Var& x, Shape shape);

// Channel structure
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int begin, int count);
/// x ⊙ mask, with a single-channel mask broadcast over x's channels.
Var mul_channel_broadcast(const Var& x, const Var& mask);
/// {C, H, W, D} -> {C}: sum over voxels divided by the voxel count.
Var spatial_mean(const Var& x);
/// {C} -> {C, H, W, D}.
Var broadcast_to_volume(const Var& v, Dims3 dims);

// Tokens
/// {C, H, W, D} -> {H*W*D, C}; token order is h-major, then w, then d.
Var volume_to_tokens(const Var& x);
Var tokens_to_volume(const Var& tokens, Dims3 dims);
/// x {N, in} * W {in, out} + b {out}; `bias` may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// softmax(Q K^T / sqrt(head_dim)) V per head. When `probs` is non-null it
/// receives the {heads, nq, nk} attention weights.
Var attention(const Var& q, const Var& k, const Var& v, int heads, Tensor* probs = nullptr);

// Volumetric
Var conv3d(const Var& x, const Var& weight, const Var& bias, int stride);
Var instance_norm(const Var& x, double eps = 1e-5);
Var softmax_channels(const Var& x);
Var resize_trilinear(const Var& x, Dims3 dims);
/// Divides every voxel's channel vector by its sum.
Var renormalize_channels(const Var& x);

}  // namespace protoseg::ag
