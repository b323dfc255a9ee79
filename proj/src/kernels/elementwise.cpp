#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "protoseg/kernels/kernels.hpp"

namespace protoseg::kernels {
namespace {

struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;  // weight of `hi`
};

// Half-pixel-center linear interpolation taps along one axis.
AxisTaps linear_taps(int src, int dst) {
  AxisTaps t;
  t.lo.resize(static_cast<std::size_t>(dst));
  t.hi.resize(static_cast<std::size_t>(dst));
  t.frac.resize(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double x = (i + 0.5) * scale - 0.5;
    if (x < 0.0) x = 0.0;
    int i0 = static_cast<int>(std::floor(x));
    if (i0 > src - 1) i0 = src - 1;
    const int i1 = std::min(i0 + 1, src - 1);
    t.lo[static_cast<std::size_t>(i)] = i0;
    t.hi[static_cast<std::size_t>(i)] = i1;
    t.frac[static_cast<std::size_t>(i)] = (i1 == i0) ? 0.0 : x - i0;
  }
  return t;
}

}  // namespace

void instance_norm_forward(int channels, std::size_t spatial, double eps, const double* x, double* y,
                           double* mean, double* inv_std) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* xc = x + static_cast<std::size_t>(c) * spatial;
    double* yc = y + static_cast<std::size_t>(c) * spatial;
    double m = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) m += xc[i];
    m /= static_cast<double>(spatial);
    double v = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) v += (xc[i] - m) * (xc[i] - m);
    v /= static_cast<double>(spatial);
    const double s = 1.0 / std::sqrt(v + eps);
    for (std::size_t i = 0; i < spatial; ++i) yc[i] = (xc[i] - m) * s;
    mean[c] = m;
    inv_std[c] = s;
  }
}

void instance_norm_backward(int channels, std::size_t spatial, const double* y, const double* inv_std,
                            const double* grad_y, double* grad_x) {
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* yc = y + static_cast<std::size_t>(c) * spatial;
    const double* gy = grad_y + static_cast<std::size_t>(c) * spatial;
    double* gx = grad_x + static_cast<std::size_t>(c) * spatial;
    double mean_g = 0.0, mean_gy = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) {
      mean_g += gy[i];
      mean_gy += gy[i] * yc[i];
    }
    mean_g /= static_cast<double>(spatial);
    mean_gy /= static_cast<double>(spatial);
    for (std::size_t i = 0; i < spatial; ++i) gx[i] += inv_std[c] * (gy[i] - mean_g - yc[i] * mean_gy);
  }
}

void resize_trilinear_forward(int channels, Dims3 src, Dims3 dst, const double* in, double* out) {
  const AxisTaps th = linear_taps(src.h, dst.h), tw = linear_taps(src.w, dst.w),
                 td = linear_taps(src.d, dst.d);
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < dst.h; ++i) {
      const double* ic = in + static_cast<std::size_t>(c) * src.size();
      double* oc = out + static_cast<std::size_t>(c) * dst.size();
      const double fh = th.frac[static_cast<std::size_t>(i)];
      const std::size_t h0 = static_cast<std::size_t>(th.lo[static_cast<std::size_t>(i)]) * src.w;
      const std::size_t h1 = static_cast<std::size_t>(th.hi[static_cast<std::size_t>(i)]) * src.w;
      for (int j = 0; j < dst.w; ++j) {
        const double fw = tw.frac[static_cast<std::size_t>(j)];
        const std::size_t w0 = static_cast<std::size_t>(tw.lo[static_cast<std::size_t>(j)]);
        const std::size_t w1 = static_cast<std::size_t>(tw.hi[static_cast<std::size_t>(j)]);
        const double* r00 = ic + (h0 + w0) * src.d;
        const double* r01 = ic + (h0 + w1) * src.d;
        const double* r10 = ic + (h1 + w0) * src.d;
        const double* r11 = ic + (h1 + w1) * src.d;
        double* o = oc + (static_cast<std::size_t>(i) * dst.w + j) * dst.d;
        for (int k = 0; k < dst.d; ++k) {
          const double fd = td.frac[static_cast<std::size_t>(k)];
          const int d0 = td.lo[static_cast<std::size_t>(k)], d1 = td.hi[static_cast<std::size_t>(k)];
          const double a = r00[d0] * (1 - fd) + r00[d1] * fd;
          const double b = r01[d0] * (1 - fd) + r01[d1] * fd;
          const double cc = r10[d0] * (1 - fd) + r10[d1] * fd;
          const double e = r11[d0] * (1 - fd) + r11[d1] * fd;
          o[k] = (a * (1 - fw) + b * fw) * (1 - fh) + (cc * (1 - fw) + e * fw) * fh;
        }
      }
    }
  }
}

void resize_trilinear_backward(int channels, Dims3 src, Dims3 dst, const double* grad_out,
                               double* grad_in) {
  const AxisTaps th = linear_taps(src.h, dst.h), tw = linear_taps(src.w, dst.w),
                 td = linear_taps(src.d, dst.d);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const double* gc = grad_out + static_cast<std::size_t>(c) * dst.size();
    double* ic = grad_in + static_cast<std::size_t>(c) * src.size();
    for (int i = 0; i < dst.h; ++i) {
      const double fh = th.frac[static_cast<std::size_t>(i)];
      const std::size_t h0 = static_cast<std::size_t>(th.lo[static_cast<std::size_t>(i)]) * src.w;
      const std::size_t h1 = static_cast<std::size_t>(th.hi[static_cast<std::size_t>(i)]) * src.w;
      for (int j = 0; j < dst.w; ++j) {
        const double fw = tw.frac[static_cast<std::size_t>(j)];
        const std::size_t w0 = static_cast<std::size_t>(tw.lo[static_cast<std::size_t>(j)]);
        const std::size_t w1 = static_cast<std::size_t>(tw.hi[static_cast<std::size_t>(j)]);
        double* r00 = ic + (h0 + w0) * src.d;
        double* r01 = ic + (h0 + w1) * src.d;
        double* r10 = ic + (h1 + w0) * src.d;
        double* r11 = ic + (h1 + w1) * src.d;
        const double* g = gc + (static_cast<std::size_t>(i) * dst.w + j) * dst.d;
        for (int k = 0; k < dst.d; ++k) {
          const double fd = td.frac[static_cast<std::size_t>(k)];
          const int d0 = td.lo[static_cast<std::size_t>(k)], d1 = td.hi[static_cast<std::size_t>(k)];
          const double v = g[k];
          const double w00 = (1 - fh) * (1 - fw), w01 = (1 - fh) * fw, w10 = fh * (1 - fw), w11 = fh * fw;
          r00[d0] += v * w00 * (1 - fd);
          r00[d1] += v * w00 * fd;
          r01[d0] += v * w01 * (1 - fd);
          r01[d1] += v * w01 * fd;
          r10[d0] += v * w10 * (1 - fd);
          r10[d1] += v * w10 * fd;
          r11[d0] += v * w11 * (1 - fd);
          r11[d1] += v * w11 * fd;
        }
      }
    }
  }
}

void softmax_channels_forward(int channels, std::size_t spatial, const double* x, double* y) {
  const auto n = static_cast<std::ptrdiff_t>(spatial);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double m = x[i];
    for (int c = 1; c < channels; ++c) m = std::max(m, x[static_cast<std::size_t>(c) * spatial + i]);
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double e = std::exp(x[static_cast<std::size_t>(c) * spatial + i] - m);
      y[static_cast<std::size_t>(c) * spatial + i] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < channels; ++c) y[static_cast<std::size_t>(c) * spatial + i] *= inv;
  }
}

void softmax_channels_backward(int channels, std::size_t spatial, const double* y,
                               const double* grad_y, double* grad_x) {
  const auto n = static_cast<std::ptrdiff_t>(spatial);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < channels; ++c) {
      const std::size_t j = static_cast<std::size_t>(c) * spatial + i;
      dot += y[j] * grad_y[j];
    }
    for (int c = 0; c < channels; ++c) {
      const std::size_t j = static_cast<std::size_t>(c) * spatial + i;
      grad_x[j] += y[j] * (grad_y[j] - dot);
    }
  }
}

namespace reference {

void instance_norm_forward(int channels, std::size_t spatial, double eps, const double* x, double* y,
                           double* mean, double* inv_std) {
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) sum += x[static_cast<std::size_t>(c) * spatial + i];
    const double m = sum / static_cast<double>(spatial);
    for (std::size_t i = 0; i < spatial; ++i) {
      const double dlt = x[static_cast<std::size_t>(c) * spatial + i] - m;
      sq += dlt * dlt;
    }
    const double s = 1.0 / std::sqrt(sq / static_cast<double>(spatial) + eps);
    for (std::size_t i = 0; i < spatial; ++i)
      y[static_cast<std::size_t>(c) * spatial + i] = (x[static_cast<std::size_t>(c) * spatial + i] - m) * s;
    mean[c] = m;
    inv_std[c] = s;
  }
}

void resize_trilinear_forward(int channels, Dims3 src, Dims3 dst, const double* in, double* out) {
  auto coord = [](int i, int n_src, int n_dst) {
    const double x = std::max(0.0, (i + 0.5) * n_src / n_dst - 0.5);
    const int i0 = std::min(static_cast<int>(x), n_src - 1);
    const int i1 = std::min(i0 + 1, n_src - 1);
    return std::tuple<int, int, double>{i0, i1, i1 == i0 ? 0.0 : x - i0};
  };
  for (int c = 0; c < channels; ++c)
    for (int i = 0; i < dst.h; ++i)
      for (int j = 0; j < dst.w; ++j)
        for (int k = 0; k < dst.d; ++k) {
          const auto [h0, h1, fh] = coord(i, src.h, dst.h);
          const auto [w0, w1, fw] = coord(j, src.w, dst.w);
          const auto [d0, d1, fd] = coord(k, src.d, dst.d);
          double acc = 0.0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) {
                const int hh = a ? h1 : h0, ww = b ? w1 : w0, dd = e ? d1 : d0;
                const double wt = (a ? fh : 1 - fh) * (b ? fw : 1 - fw) * (e ? fd : 1 - fd);
                acc += wt * in[((static_cast<std::size_t>(c) * src.h + hh) * src.w + ww) * src.d + dd];
              }
          out[((static_cast<std::size_t>(c) * dst.h + i) * dst.w + j) * dst.d + k] = acc;
        }
}

void softmax_channels_forward(int channels, std::size_t spatial, const double* x, double* y) {
  for (std::size_t i = 0; i < spatial; ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) sum += std::exp(x[static_cast<std::size_t>(c) * spatial + i]);
    for (int c = 0; c < channels; ++c)
      y[static_cast<std::size_t>(c) * spatial + i] = std::exp(x[static_cast<std::size_t>(c) * spatial + i]) / sum;
  }
}

}  // namespace reference
}  // namespace protoseg::kernels
