#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <vector>

#include "protoseg/core/error.hpp"
#include "protoseg/kernels/kernels.hpp"
#include "protoseg/kernels/parallel.hpp"

namespace protoseg::kernels {
namespace {

using ColMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;

constexpr int kChannelBlock = 4;

inline std::size_t widx(const ConvGeometry& g, int co, int ci, int kh, int kw, int kd) {
  const int k = g.kernel;
  return (((static_cast<std::size_t>(co) * g.in_channels + ci) * k + kh) * k + kw) * k + kd;
}

// Direct 3x3x3 stride-1 convolution. The innermost loop runs along the
// contiguous d axis and updates a block of output channels per input load.
template <int Block>
void direct_k3_block(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                     int co0, int h, double* out, bool accumulate, std::vector<double>& acc,
                     std::vector<double>& row) {
  const Dims3 n = g.in;
  const std::size_t plane = n.size();
  const int D = n.d;
  for (int x = 0; x < n.w; ++x) {
    for (int c = 0; c < Block; ++c) {
      const double b = bias ? bias[co0 + c] : 0.0;
      std::fill(acc.begin() + static_cast<std::ptrdiff_t>(c) * D,
                acc.begin() + static_cast<std::ptrdiff_t>(c + 1) * D, b);
    }
    for (int ci = 0; ci < g.in_channels; ++ci) {
      for (int kh = 0; kh < 3; ++kh) {
        const int ih = h + kh - 1;
        if (ih < 0 || ih >= n.h) continue;
        for (int kw = 0; kw < 3; ++kw) {
          const int iw = x + kw - 1;
          if (iw < 0 || iw >= n.w) continue;
          const double* src = in + ci * plane + (static_cast<std::size_t>(ih) * n.w + iw) * D;
          std::memcpy(row.data() + 1, src, sizeof(double) * static_cast<std::size_t>(D));
          for (int kd = 0; kd < 3; ++kd) {
            const double* r = row.data() + kd;
            for (int c = 0; c < Block; ++c) {
              const double wv = weight[widx(g, co0 + c, ci, kh, kw, kd)];
              double* a = acc.data() + static_cast<std::ptrdiff_t>(c) * D;
#pragma omp simd
              for (int z = 0; z < D; ++z) a[z] += wv * r[z];
            }
          }
        }
      }
    }
    for (int c = 0; c < Block; ++c) {
      double* dst = out + (co0 + c) * plane + (static_cast<std::size_t>(h) * n.w + x) * D;
      const double* a = acc.data() + static_cast<std::ptrdiff_t>(c) * D;
      if (accumulate) {
        for (int z = 0; z < D; ++z) dst[z] += a[z];
      } else {
        std::memcpy(dst, a, sizeof(double) * static_cast<std::size_t>(D));
      }
    }
  }
}

void direct_k3(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
               double* out, bool accumulate) {
  const int blocks = (g.out_channels + kChannelBlock - 1) / kChannelBlock;
  const int H = g.in.h;
#pragma omp parallel
  {
    std::vector<double> acc(static_cast<std::size_t>(kChannelBlock) * g.in.d);
    std::vector<double> row(static_cast<std::size_t>(g.in.d) + 2, 0.0);
#pragma omp for collapse(2) schedule(static)
    for (int b = 0; b < blocks; ++b) {
      for (int h = 0; h < H; ++h) {
        const int co0 = b * kChannelBlock;
        switch (std::min(kChannelBlock, g.out_channels - co0)) {
          case 4: direct_k3_block<4>(g, in, weight, bias, co0, h, out, accumulate, acc, row); break;
          case 3: direct_k3_block<3>(g, in, weight, bias, co0, h, out, accumulate, acc, row); break;
          case 2: direct_k3_block<2>(g, in, weight, bias, co0, h, out, accumulate, acc, row); break;
          default: direct_k3_block<1>(g, in, weight, bias, co0, h, out, accumulate, acc, row); break;
        }
      }
    }
  }
}

// Fills the patch matrix for output slice `oh`: column-major {S_slice x K},
// row = output voxel (ow, od), column = (ci, kh, kw, kd).
void im2col_slice(const ConvGeometry& g, const double* in, int oh, double* col) {
  const int k = g.kernel, s = g.stride, p = g.padding();
  const std::size_t S = static_cast<std::size_t>(g.out.w) * g.out.d;
  const std::size_t plane = g.in.size();
  std::size_t column = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      const int ih = oh * s + kh - p;
      for (int kw = 0; kw < k; ++kw) {
        for (int kd = 0; kd < k; ++kd, ++column) {
          double* dst = col + column * S;
          if (ih < 0 || ih >= g.in.h) {
            std::fill(dst, dst + S, 0.0);
            continue;
          }
          for (int ow = 0; ow < g.out.w; ++ow) {
            const int iw = ow * s + kw - p;
            double* r = dst + static_cast<std::size_t>(ow) * g.out.d;
            if (iw < 0 || iw >= g.in.w) {
              std::fill(r, r + g.out.d, 0.0);
              continue;
            }
            const double* src = in + ci * plane + (static_cast<std::size_t>(ih) * g.in.w + iw) * g.in.d;
            for (int od = 0; od < g.out.d; ++od) {
              const int id = od * s + kd - p;
              r[od] = (id >= 0 && id < g.in.d) ? src[id] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_slice(const ConvGeometry& g, const double* col, int oh, double* grad_in) {
  const int k = g.kernel, s = g.stride, p = g.padding();
  const std::size_t S = static_cast<std::size_t>(g.out.w) * g.out.d;
  const std::size_t plane = g.in.size();
  std::size_t column = 0;
  for (int ci = 0; ci < g.in_channels; ++ci) {
    for (int kh = 0; kh < k; ++kh) {
      const int ih = oh * s + kh - p;
      for (int kw = 0; kw < k; ++kw) {
        for (int kd = 0; kd < k; ++kd, ++column) {
          if (ih < 0 || ih >= g.in.h) continue;
          const double* src = col + column * S;
          for (int ow = 0; ow < g.out.w; ++ow) {
            const int iw = ow * s + kw - p;
            if (iw < 0 || iw >= g.in.w) continue;
            const double* r = src + static_cast<std::size_t>(ow) * g.out.d;
            double* dst = grad_in + ci * plane + (static_cast<std::size_t>(ih) * g.in.w + iw) * g.in.d;
            for (int od = 0; od < g.out.d; ++od) {
              const int id = od * s + kd - p;
              if (id >= 0 && id < g.in.d) dst[id] += r[od];
            }
          }
        }
      }
    }
  }
}

std::size_t patch_width(const ConvGeometry& g) {
  return static_cast<std::size_t>(g.in_channels) * g.kernel * g.kernel * g.kernel;
}

void gemm_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                  double* out) {
  const std::size_t K = patch_width(g);
  const Eigen::Index S = static_cast<Eigen::Index>(g.out.w) * g.out.d;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.out.size());
  Eigen::Map<const ColMajor> w(weight, static_cast<Eigen::Index>(K), g.out_channels);
#pragma omp parallel
  {
    std::vector<double> col(K * static_cast<std::size_t>(S));
#pragma omp for schedule(static)
    for (int oh = 0; oh < g.out.h; ++oh) {
      im2col_slice(g, in, oh, col.data());
      Eigen::Map<ColMajor, 0, Stride> o(out + static_cast<std::size_t>(oh) * S, S, g.out_channels,
                                        Stride(out_plane));
      o.noalias() = Eigen::Map<const ColMajor>(col.data(), S, static_cast<Eigen::Index>(K)) * w;
      if (bias)
        for (int c = 0; c < g.out_channels; ++c) o.col(c).array() += bias[c];
    }
  }
}

void gemm_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                         double* grad_in) {
  const std::size_t K = patch_width(g);
  const Eigen::Index S = static_cast<Eigen::Index>(g.out.w) * g.out.d;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.out.size());
  Eigen::Map<const ColMajor> w(weight, static_cast<Eigen::Index>(K), g.out_channels);
  // Output slices in the same phase touch disjoint input rows.
  const int phases = (g.kernel + g.stride - 1) / g.stride;
#pragma omp parallel
  {
    std::vector<double> col(K * static_cast<std::size_t>(S));
    for (int phase = 0; phase < phases; ++phase) {
#pragma omp for schedule(static)
      for (int oh = phase; oh < g.out.h; oh += phases) {
        Eigen::Map<const ColMajor, 0, Stride> go(grad_out + static_cast<std::size_t>(oh) * S, S,
                                                 g.out_channels, Stride(out_plane));
        Eigen::Map<ColMajor>(col.data(), S, static_cast<Eigen::Index>(K)).noalias() = go * w.transpose();
        col2im_slice(g, col.data(), oh, grad_in);
      }
    }
  }
}

void gemm_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                          double* grad_weight, double* grad_bias) {
  const std::size_t K = patch_width(g);
  const Eigen::Index S = static_cast<Eigen::Index>(g.out.w) * g.out.d;
  const Eigen::Index out_plane = static_cast<Eigen::Index>(g.out.size());
  Eigen::Map<ColMajor> gw(grad_weight, static_cast<Eigen::Index>(K), g.out_channels);
  // Per-thread partial sums, reduced in thread order for reproducibility.
  std::vector<ColMajor> partials(static_cast<std::size_t>(max_threads()));
#pragma omp parallel
  {
    std::vector<double> col(K * static_cast<std::size_t>(S));
    ColMajor& partial = partials[static_cast<std::size_t>(thread_id())];
    partial = ColMajor::Zero(static_cast<Eigen::Index>(K), g.out_channels);
#pragma omp for schedule(static)
    for (int oh = 0; oh < g.out.h; ++oh) {
      im2col_slice(g, in, oh, col.data());
      Eigen::Map<const ColMajor, 0, Stride> go(grad_out + static_cast<std::size_t>(oh) * S, S,
                                               g.out_channels, Stride(out_plane));
      partial.noalias() +=
          Eigen::Map<const ColMajor>(col.data(), S, static_cast<Eigen::Index>(K)).transpose() * go;
    }
  }
  for (const ColMajor& partial : partials)
    if (partial.size() > 0) gw += partial;
  if (grad_bias) {
    for (int c = 0; c < g.out_channels; ++c) {
      const double* go = grad_out + static_cast<std::size_t>(c) * g.out.size();
      double s = 0.0;
      for (std::size_t i = 0; i < g.out.size(); ++i) s += go[i];
      grad_bias[c] += s;
    }
  }
}

void pointwise_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                       double* out) {
  const Eigen::Index S = static_cast<Eigen::Index>(g.in.size());
  Eigen::Map<const RowMajor> w(weight, g.out_channels, g.in_channels);
  Eigen::Map<const RowMajor> x(in, g.in_channels, S);
  Eigen::Map<RowMajor> y(out, g.out_channels, S);
  y.noalias() = w * x;
  if (bias)
    for (int c = 0; c < g.out_channels; ++c) y.row(c).array() += bias[c];
}

void pointwise_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                              double* grad_in) {
  const Eigen::Index S = static_cast<Eigen::Index>(g.in.size());
  Eigen::Map<const RowMajor> w(weight, g.out_channels, g.in_channels);
  Eigen::Map<const RowMajor> gy(grad_out, g.out_channels, S);
  Eigen::Map<RowMajor> gx(grad_in, g.in_channels, S);
  gx.noalias() += w.transpose() * gy;
}

void pointwise_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                               double* grad_weight, double* grad_bias) {
  const Eigen::Index S = static_cast<Eigen::Index>(g.in.size());
  Eigen::Map<const RowMajor> x(in, g.in_channels, S);
  Eigen::Map<const RowMajor> gy(grad_out, g.out_channels, S);
  Eigen::Map<RowMajor> gw(grad_weight, g.out_channels, g.in_channels);
  gw.noalias() += gy * x.transpose();
  if (grad_bias)
    for (int c = 0; c < g.out_channels; ++c) grad_bias[c] += gy.row(c).sum();
}

// Direct kernels pay off once a row along d is long enough to vectorize.
bool use_direct(const ConvGeometry& g) { return g.kernel == 3 && g.stride == 1 && g.in.d >= 8; }

}  // namespace

ConvGeometry conv_geometry(int in_channels, int out_channels, int kernel, int stride, Dims3 in) {
  if (in_channels <= 0 || out_channels <= 0) throw ShapeError("conv3d: channel counts must be positive");
  if (kernel != 1 && kernel != 3) throw ShapeError("conv3d: kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw ShapeError("conv3d: stride must be 1 or 2");
  ConvGeometry g;
  g.in_channels = in_channels;
  g.out_channels = out_channels;
  g.kernel = kernel;
  g.stride = stride;
  g.in = in;
  const int p = kernel / 2;
  auto out_extent = [&](int n) { return (n + 2 * p - kernel) / stride + 1; };
  g.out = {out_extent(in.h), out_extent(in.w), out_extent(in.d)};
  if (g.out.h <= 0 || g.out.w <= 0 || g.out.d <= 0)
    throw ShapeError("conv3d: input " + to_string(in) + " too small");
  return g;
}

void conv3d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out) {
  if (g.kernel == 1 && g.stride == 1) {
    pointwise_forward(g, in, weight, bias, out);
  } else if (use_direct(g)) {
    direct_k3(g, in, weight, bias, out, false);
  } else {
    gemm_forward(g, in, weight, bias, out);
  }
}

void conv3d_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                           double* grad_in) {
  if (g.kernel == 1 && g.stride == 1) {
    pointwise_backward_input(g, grad_out, weight, grad_in);
  } else if (use_direct(g)) {
    // Stride-1 transposed convolution is a forward convolution with the
    // kernel flipped and the channel roles swapped.
    ConvGeometry t = g;
    std::swap(t.in_channels, t.out_channels);
    std::vector<double> flipped(g.weight_size());
    for (int co = 0; co < g.out_channels; ++co)
      for (int ci = 0; ci < g.in_channels; ++ci)
        for (int kh = 0; kh < 3; ++kh)
          for (int kw = 0; kw < 3; ++kw)
            for (int kd = 0; kd < 3; ++kd)
              flipped[widx(t, ci, co, 2 - kh, 2 - kw, 2 - kd)] = weight[widx(g, co, ci, kh, kw, kd)];
    direct_k3(t, grad_out, flipped.data(), nullptr, grad_in, true);
  } else {
    gemm_backward_input(g, grad_out, weight, grad_in);
  }
}

void conv3d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                            double* grad_weight, double* grad_bias) {
  if (g.kernel == 1 && g.stride == 1) {
    pointwise_backward_weight(g, in, grad_out, grad_weight, grad_bias);
  } else {
    gemm_backward_weight(g, in, grad_out, grad_weight, grad_bias);
  }
}

namespace reference {

void conv3d_forward(const ConvGeometry& g, const double* in, const double* weight, const double* bias,
                    double* out) {
  const int k = g.kernel, s = g.stride, p = g.padding();
  for (int co = 0; co < g.out_channels; ++co)
    for (int oh = 0; oh < g.out.h; ++oh)
      for (int ow = 0; ow < g.out.w; ++ow)
        for (int od = 0; od < g.out.d; ++od) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw)
                for (int kd = 0; kd < k; ++kd) {
                  const int ih = oh * s + kh - p, iw = ow * s + kw - p, id = od * s + kd - p;
                  if (ih < 0 || iw < 0 || id < 0 || ih >= g.in.h || iw >= g.in.w || id >= g.in.d) continue;
                  acc += weight[widx(g, co, ci, kh, kw, kd)] *
                         in[((static_cast<std::size_t>(ci) * g.in.h + ih) * g.in.w + iw) * g.in.d + id];
                }
          out[((static_cast<std::size_t>(co) * g.out.h + oh) * g.out.w + ow) * g.out.d + od] = acc;
        }
}

void conv3d_backward_input(const ConvGeometry& g, const double* grad_out, const double* weight,
                           double* grad_in) {
  const int k = g.kernel, s = g.stride, p = g.padding();
  for (int co = 0; co < g.out_channels; ++co)
    for (int oh = 0; oh < g.out.h; ++oh)
      for (int ow = 0; ow < g.out.w; ++ow)
        for (int od = 0; od < g.out.d; ++od) {
          const double go = grad_out[((static_cast<std::size_t>(co) * g.out.h + oh) * g.out.w + ow) * g.out.d + od];
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw)
                for (int kd = 0; kd < k; ++kd) {
                  const int ih = oh * s + kh - p, iw = ow * s + kw - p, id = od * s + kd - p;
                  if (ih < 0 || iw < 0 || id < 0 || ih >= g.in.h || iw >= g.in.w || id >= g.in.d) continue;
                  grad_in[((static_cast<std::size_t>(ci) * g.in.h + ih) * g.in.w + iw) * g.in.d + id] +=
                      weight[widx(g, co, ci, kh, kw, kd)] * go;
                }
        }
}

void conv3d_backward_weight(const ConvGeometry& g, const double* in, const double* grad_out,
                            double* grad_weight, double* grad_bias) {
  const int k = g.kernel, s = g.stride, p = g.padding();
  for (int co = 0; co < g.out_channels; ++co)
    for (int oh = 0; oh < g.out.h; ++oh)
      for (int ow = 0; ow < g.out.w; ++ow)
        for (int od = 0; od < g.out.d; ++od) {
          const double go = grad_out[((static_cast<std::size_t>(co) * g.out.h + oh) * g.out.w + ow) * g.out.d + od];
          if (grad_bias) grad_bias[co] += go;
          for (int ci = 0; ci < g.in_channels; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw)
                for (int kd = 0; kd < k; ++kd) {
                  const int ih = oh * s + kh - p, iw = ow * s + kw - p, id = od * s + kd - p;
                  if (ih < 0 || iw < 0 || id < 0 || ih >= g.in.h || iw >= g.in.w || id >= g.in.d) continue;
                  grad_weight[widx(g, co, ci, kh, kw, kd)] +=
                      go * in[((static_cast<std::size_t>(ci) * g.in.h + ih) * g.in.w + iw) * g.in.d + id];
                }
        }
}

}  // namespace reference
}  // namespace protoseg::kernels
