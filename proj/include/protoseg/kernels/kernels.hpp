#pragma once

// Numeric kernels behind the autograd ops. Everything here works on raw
// contiguous buffers in {C, H, W, D} order (D contiguous). The functions in
// `protoseg::kernels` are the OpenMP-parallel production versions; the ones
// in `protoseg::kernels::reference` are plain serial loops that the tests
// and the benchmark compare against.
//
// Backward kernels accumulate into their gradient outputs.

#include <cstddef>

#include "protoseg/core/tensor.hpp"

namespace protoseg::kernels {

/// Cubic convolution with zero padding kernel/2 on every side.
struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Dims3 in;
  Dims3 out;

  int padding() const noexcept { return kernel / 2; }
  std::size_t weight_size() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel * kernel;
  }
};

ConvGeometry conv_geometry(int in_channels, int out_channels, int kernel, int stride, Dims3 in);

void conv3d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out);
void conv3d_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                           double* grad_in);
void conv3d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                            double* grad_weight, double* grad_bias);

/// Per-channel normalization over the spatial extent. Saves mean and
/// 1/sqrt(var + eps) per channel for the backward pass.
void instance_norm_forward(int channels, std::size_t spatial, double eps, const double* x, double* y,
                           double* mean, double* inv_std);
void instance_norm_backward(int channels, std::size_t spatial, const double* y, const double* inv_std,
                            const double* grad_y, double* grad_x);

/// Trilinear resampling with half-pixel centers (align_corners = false).
void resize_trilinear_forward(int channels, Dims3 src, Dims3 dst, const double* in, double* out);
void resize_trilinear_backward(int channels, Dims3 src, Dims3 dst, const double* grad_out,
                               double* grad_in);

/// Softmax across the channel axis independently at every voxel.
void softmax_channels_forward(int channels, std::size_t spatial, const double* x, double* y);
void softmax_channels_backward(int channels, std::size_t spatial, const double* y,
                               const double* grad_y, double* grad_x);

/// Scaled dot-product attention over pre-projected inputs. Q is
/// {nq, heads*head_dim}, K and V are {nk, heads*head_dim}; head h uses the
/// column block [h*head_dim, (h+1)*head_dim). `probs` receives the
/// {heads, nq, nk} attention weights.
struct AttentionShape {
  int queries = 0;
  int keys = 0;
  int heads = 1;
  int head_dim = 1;
  int width() const noexcept { return heads * head_dim; }
};

void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       double* out, double* probs);
void attention_backward(const AttentionShape& s, const double* q, const double* k, const double* v,
                        const double* probs, const double* grad_out, double* grad_q, double* grad_k,
                        double* grad_v);

namespace reference {

void conv3d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out);
void conv3d_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                           double* grad_in);
void conv3d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                            double* grad_weight, double* grad_bias);
void instance_norm_forward(int channels, std::size_t spatial, double eps, const double* x, double* y,
                           double* mean, double* inv_std);
void resize_trilinear_forward(int channels, Dims3 src, Dims3 dst, const double* in, double* out);
void softmax_channels_forward(int channels, std::size_t spatial, const double* x, double* y);
void attention_forward(const AttentionShape& s, const double* q, const double* k, const double* v,
                       double* out, double* probs);

}  // namespace reference

}  // namespace protoseg::kernels
