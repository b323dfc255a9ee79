#pragma once

// Loop-only reference implementations used to cross-check the model and
// metric code. Nothing here calls the kernels or the autograd ops.

#include <string>

#include "protoseg/metrics/metrics.hpp"
#include "protoseg/nn/params.hpp"

namespace protoseg::verify {

/// {C, H, W, D} -> {H*W*D, C}, h-major token order.
Tensor oracle_tokens(const Tensor& volume);
Tensor oracle_volume(const Tensor& tokens, Dims3 dims);
Tensor oracle_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// x {N, in} W {in, out} (+ b); `bias` may be empty.
Tensor oracle_linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Per-head softmax(q k^T / sqrt(d)) v with heads as contiguous column blocks.
Tensor oracle_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

struct AttentionWeights {
  Tensor gamma_q, beta_q, gamma_kv, beta_kv;
  Tensor wq, wk, wv, wo, bo;
  int heads = 1;
};
/// Reads the parameters of the attention block stored under `path`.
AttentionWeights attention_weights(const nn::ParamStore& store, const std::string& path, int heads);
/// out(attention(q(LN(current)), k(LN'(other)), v(LN'(other)))).
Tensor oracle_mha(const Tensor& current, const Tensor& other, const AttentionWeights& w);

/// Projection to tokens then P + MHSA(P).
Tensor oracle_self_attend(const Tensor& feature, const Tensor& proj_w, const Tensor& proj_b, const AttentionWeights& w);
/// Channel concat of the four volumes, self-attention over tokens, optional residual, back to a volume.
Tensor oracle_fuse(const std::array<Tensor, 4>& modal, const AttentionWeights& w, bool residual);

/// sum_j F_j * P_j / N, or / sum_j P_j (+1e-8) when `masked_average`.
Tensor oracle_prototype(const Tensor& features, const Tensor& map, bool masked_average);

/// Zero-padded (k/2) cross-correlation with stride.
Tensor oracle_conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride);
/// restore(spatial([F*P_1; F*P_2; F*P_3])) with maps {4, ...}.
Tensor oracle_integrate(const Tensor& feature, const Tensor& maps, const Tensor& w_spatial, const Tensor& b_spatial,
                        const Tensor& w_restore, const Tensor& b_restore);

/// Dice from explicit intersection/size counts.
double oracle_dice(const metrics::BinaryMask& a, const metrics::BinaryMask& b);
/// All-pairs surface distances, pooled both ways, linear 95th percentile.
double oracle_hd95(const metrics::BinaryMask& a, const metrics::BinaryMask& b, double empty_penalty);

}  // namespace protoseg::verify
