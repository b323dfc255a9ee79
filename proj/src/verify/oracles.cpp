#include "protoseg/verify/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "protoseg/core/error.hpp"

namespace protoseg::verify {

Tensor oracle_tokens(const Tensor& v) {
  const int c = v.dim(0), h = v.dim(1), w = v.dim(2), d = v.dim(3);
  Tensor t({h * w * d, c});
  int n = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int k = 0; k < d; ++k, ++n)
        for (int ch = 0; ch < c; ++ch) t[static_cast<std::size_t>(n) * c + ch] = v[((static_cast<std::size_t>(ch) * h + i) * w + j) * d + k];
  return t;
}

Tensor oracle_volume(const Tensor& t, Dims3 dims) {
  const int c = t.dim(1);
  Tensor v({c, dims.h, dims.w, dims.d});
  int n = 0;
  for (int i = 0; i < dims.h; ++i)
    for (int j = 0; j < dims.w; ++j)
      for (int k = 0; k < dims.d; ++k, ++n)
        for (int ch = 0; ch < c; ++ch)
          v[((static_cast<std::size_t>(ch) * dims.h + i) * dims.w + j) * dims.d + k] = t[static_cast<std::size_t>(n) * c + ch];
  return v;
}

Tensor oracle_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int n = x.dim(0), c = x.dim(1);
  Tensor y(x.shape());
  for (int r = 0; r < n; ++r) {
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += x[static_cast<std::size_t>(r) * c + j];
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double z = x[static_cast<std::size_t>(r) * c + j] - mean;
      var += z * z;
    }
    var /= c;
    for (int j = 0; j < c; ++j)
      y[static_cast<std::size_t>(r) * c + j] =
          (x[static_cast<std::size_t>(r) * c + j] - mean) / std::sqrt(var + eps) * gamma[j] + beta[j];
  }
  return y;
}

Tensor oracle_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(1);
  Tensor y({n, out});
  for (int r = 0; r < n; ++r)
    for (int o = 0; o < out; ++o) {
      double s = b.empty() ? 0.0 : b[o];
      for (int i = 0; i < in; ++i) s += x[static_cast<std::size_t>(r) * in + i] * w[static_cast<std::size_t>(i) * out + o];
      y[static_cast<std::size_t>(r) * out + o] = s;
    }
  return y;
}

Tensor oracle_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  const int nq = q.dim(0), nk = k.dim(0), width = q.dim(1), hd = width / heads;
  Tensor out({nq, width});
  std::vector<double> score(static_cast<std::size_t>(nk));
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < nq; ++i) {
      double mx = -1e300;
      for (int j = 0; j < nk; ++j) {
        double s = 0.0;
        for (int c = 0; c < hd; ++c)
          s += q[static_cast<std::size_t>(i) * width + h * hd + c] * k[static_cast<std::size_t>(j) * width + h * hd + c];
        score[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, score[j]);
      }
      double z = 0.0;
      for (int j = 0; j < nk; ++j) z += std::exp(score[j] - mx);
      for (int c = 0; c < hd; ++c) {
        double s = 0.0;
        for (int j = 0; j < nk; ++j)
          s += std::exp(score[j] - mx) / z * v[static_cast<std::size_t>(j) * width + h * hd + c];
        out[static_cast<std::size_t>(i) * width + h * hd + c] = s;
      }
    }
  return out;
}

AttentionWeights attention_weights(const nn::ParamStore& store, const std::string& path, int heads) {
  AttentionWeights w;
  w.heads = heads;
  const bool shared = store.contains(path + ".norm.gamma");
  const std::string nq = shared ? ".norm" : ".norm_q", nkv = shared ? ".norm" : ".norm_kv";
  w.gamma_q = store.at(path + nq + ".gamma").value();
  w.beta_q = store.at(path + nq + ".beta").value();
  w.gamma_kv = store.at(path + nkv + ".gamma").value();
  w.beta_kv = store.at(path + nkv + ".beta").value();
  w.wq = store.at(path + ".q.weight").value();
  w.wk = store.at(path + ".k.weight").value();
  w.wv = store.at(path + ".v.weight").value();
  w.wo = store.at(path + ".out.weight").value();
  w.bo = store.at(path + ".out.bias").value();
  return w;
}

Tensor oracle_mha(const Tensor& current, const Tensor& other, const AttentionWeights& w) {
  const Tensor a = oracle_layer_norm(current, w.gamma_q, w.beta_q);
  const Tensor b = oracle_layer_norm(other, w.gamma_kv, w.beta_kv);
  const Tensor none;
  const Tensor att = oracle_attention(oracle_linear(a, w.wq, none), oracle_linear(b, w.wk, none),
                                      oracle_linear(b, w.wv, none), w.heads);
  return oracle_linear(att, w.wo, w.bo);
}

Tensor oracle_self_attend(const Tensor& feature, const Tensor& proj_w, const Tensor& proj_b, const AttentionWeights& w) {
  Tensor p = oracle_linear(oracle_tokens(feature), proj_w, proj_b);
  const Tensor a = oracle_mha(p, p, w);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += a[i];
  return p;
}

Tensor oracle_fuse(const std::array<Tensor, 4>& modal, const AttentionWeights& w, bool residual) {
  const int c = modal[0].dim(0);
  const Dims3 dims{modal[0].dim(1), modal[0].dim(2), modal[0].dim(3)};
  Tensor cat({4 * c, dims.h, dims.w, dims.d});
  const std::size_t block = modal[0].size();
  for (int m = 0; m < 4; ++m)
    for (std::size_t i = 0; i < block; ++i) cat[m * block + i] = modal[static_cast<std::size_t>(m)][i];
  Tensor t = oracle_tokens(cat);
  const Tensor a = oracle_mha(t, t, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = residual ? t[i] + a[i] : a[i];
  return oracle_volume(t, dims);
}

Tensor oracle_prototype(const Tensor& f, const Tensor& p, bool masked) {
  const int c = f.dim(0);
  const std::size_t n = p.size();
  Tensor out({c});
  double mass = 0.0;
  for (std::size_t j = 0; j < n; ++j) mass += p[j];
  for (int ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += f[ch * n + j] * p[j];
    out[ch] = masked ? (s / static_cast<double>(n)) / (mass / static_cast<double>(n) + 1e-8) : s / static_cast<double>(n);
  }
  return out;
}

Tensor oracle_conv3d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2), d = x.dim(3);
  const int co = w.dim(0), k = w.dim(2), pad = k / 2;
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1, od = (d + 2 * pad - k) / stride + 1;
  Tensor y({co, oh, ow, od});
  for (int o = 0; o < co; ++o)
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        for (int l = 0; l < od; ++l) {
          double s = b.empty() ? 0.0 : b[o];
          for (int c = 0; c < ci; ++c)
            for (int a = 0; a < k; ++a)
              for (int bb = 0; bb < k; ++bb)
                for (int e = 0; e < k; ++e) {
                  const int si = i * stride + a - pad, sj = j * stride + bb - pad, sl = l * stride + e - pad;
                  if (si < 0 || sj < 0 || sl < 0 || si >= h || sj >= wd || sl >= d) continue;
                  s += x[((static_cast<std::size_t>(c) * h + si) * wd + sj) * d + sl] *
                       w[(((static_cast<std::size_t>(o) * ci + c) * k + a) * k + bb) * k + e];
                }
          y[((static_cast<std::size_t>(o) * oh + i) * ow + j) * od + l] = s;
        }
  return y;
}

Tensor oracle_integrate(const Tensor& f, const Tensor& maps, const Tensor& ws, const Tensor& bs, const Tensor& wr,
                        const Tensor& br) {
  const int c = f.dim(0);
  const std::size_t n = f.size() / static_cast<std::size_t>(c);
  Tensor cat({3 * c, f.dim(1), f.dim(2), f.dim(3)});
  for (int r = 0; r < 3; ++r)
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < n; ++j) cat[(static_cast<std::size_t>(r) * c + ch) * n + j] = f[ch * n + j] * maps[(r + 1) * n + j];
  return oracle_conv3d(oracle_conv3d(cat, ws, bs, 1), wr, br, 1);
}

double oracle_dice(const metrics::BinaryMask& a, const metrics::BinaryMask& b) {
  double inter = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values[i] && b.values[i]) inter += 1.0;
    if (a.values[i]) sa += 1.0;
    if (b.values[i]) sb += 1.0;
  }
  if (sa == 0.0 && sb == 0.0) return 1.0;
  return 2.0 * inter / (sa + sb);
}

namespace {

std::vector<std::array<int, 3>> boundary(const metrics::BinaryMask& m) {
  const Dims3 d = m.dims;
  auto at = [&](int i, int j, int k) -> bool {
    return i >= 0 && j >= 0 && k >= 0 && i < d.h && j < d.w && k < d.d &&
           m.values[(static_cast<std::size_t>(i) * d.w + j) * d.d + k];
  };
  const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> out;
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j)
      for (int k = 0; k < d.d; ++k) {
        if (!at(i, j, k)) continue;
        bool edge = false;
        for (const auto& o : off) edge = edge || !at(i + o[0], j + o[1], k + o[2]);
        if (edge) out.push_back({i, j, k});
      }
  return out;
}

}  // namespace

double oracle_hd95(const metrics::BinaryMask& a, const metrics::BinaryMask& b, double empty_penalty) {
  const auto sa = boundary(a), sb = boundary(b);
  if (sa.empty() && sb.empty()) return 0.0;
  if (sa.empty() || sb.empty()) return empty_penalty;
  const auto& sp = a.spacing;
  auto nearest = [&](const std::array<int, 3>& p, const std::vector<std::array<int, 3>>& set) {
    double best = 1e300;
    for (const auto& q : set) {
      const double x = (p[0] - q[0]) * sp[0], y = (p[1] - q[1]) * sp[1], z = (p[2] - q[2]) * sp[2];
      best = std::min(best, x * x + y * y + z * z);
    }
    return std::sqrt(best);
  };
  std::vector<double> all;
  for (const auto& p : sa) all.push_back(nearest(p, sb));
  for (const auto& p : sb) all.push_back(nearest(p, sa));
  std::sort(all.begin(), all.end());
  const double rank = 0.95 * static_cast<double>(all.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= all.size()) return all.back();
  return all[lo] * (1.0 - (rank - static_cast<double>(lo))) + all[lo + 1] * (rank - static_cast<double>(lo));
}

}  // namespace protoseg::verify
